"""Discrete-time queueing matching simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimator as est
from . import mnl
from .model import Instance
from .optimizer import Assignment, objective, solve_exact
from .policies import (
    PolicyKind,
    PolicyParams,
    PolicyState,
    absorb_feedback,
    make_policy,
    random_assignment,
    schedule,
)

# SeedSequence spawn keys; the policy stream also carries the policy kind
ARRIVALS, SERVICE, POLICY = 0, 1, 2
_KIND_CODE = {k: i for i, k in enumerate(PolicyKind)}


@dataclass
class QueueState:
    q: np.ndarray
    t: int = 1

    @classmethod
    def empty(cls, N: int) -> "QueueState":
        return cls(np.zeros(N, dtype=np.int64), 1)


@dataclass
class StepRecord:
    arrivals: np.ndarray
    assignment: Assignment
    services: np.ndarray
    regret_increment: float


@dataclass
class RunMetrics:
    total_queue: np.ndarray  # sum_n Q_n(t) at the start of round t
    cum_regret: np.ndarray
    est_error: np.ndarray  # mean_k ||theta_hat_k - theta_k||, NaN where not sampled
    q_max: int = 0
    kind: str = ""
    seed: int = 0

    @property
    def T(self) -> int:
        return len(self.total_queue)


@dataclass
class Streams:
    arrivals: np.random.Generator
    service: np.random.Generator
    policy: np.random.Generator

    @classmethod
    def derive(cls, seed: int, kind) -> "Streams":
        kind = PolicyKind(kind)

        def gen(*key):
            return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))

        return cls(gen(ARRIVALS), gen(SERVICE), gen(POLICY, _KIND_CODE[kind]))


def instantaneous_regret(inst: Instance, q, chosen: Assignment, H: Optional[np.ndarray] = None) -> float:
    """Queue-weighted expected-service gap between MaxWeight on the true utilities and ``chosen``."""
    q = np.asarray(q)
    active = [int(n) for n in np.flatnonzero(q > 0)]
    if not active:
        return 0.0
    H = inst.utilities() if H is None else H
    w = q.astype(float)
    best, best_value = solve_exact(w, H, active, inst.K, inst.L)
    if best == chosen:
        return 0.0
    return best_value - objective(chosen, w, H)


def step(
    inst: Instance,
    queue: QueueState,
    policy: PolicyState,
    streams: Streams,
    H_true: Optional[np.ndarray] = None,
) -> tuple[QueueState, StepRecord]:
    H_true = inst.utilities() if H_true is None else H_true
    arrivals = (streams.arrivals.random(inst.N) < inst.lambdas).astype(np.int64)
    visible = queue.q + arrivals if policy.params.schedule_after_arrivals else queue.q
    assignment = schedule(policy, inst, visible, queue.t, streams.policy)

    services = np.zeros(inst.N, dtype=np.int64)
    feedback: list = [None] * inst.K
    for k, S in enumerate(assignment.assortments(inst.K)):
        if not S:
            continue
        chosen = mnl.sample_choice(S, H_true[:, k], streams.service)
        if chosen != mnl.NULL:
            services[chosen] = 1
        feedback[k] = est.Feedback.from_choice(S, chosen)

    q_next = np.maximum(0, queue.q + arrivals - services)
    absorb_feedback(policy, inst, feedback)
    regret = instantaneous_regret(inst, visible, assignment, H_true)
    record = StepRecord(arrivals, assignment, services, regret)
    return QueueState(q_next, queue.t + 1), record


def run(
    inst: Instance,
    kind,
    T: int,
    seed: int,
    params: Optional[PolicyParams] = None,
    on_step=None,
) -> RunMetrics:
    """Simulate ``T`` rounds from empty queues.

    ``on_step(queue_before, record, queue_after)`` is called every round when given.
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    kind = PolicyKind(kind)
    policy = make_policy(kind, inst, params)
    streams = Streams.derive(seed, kind)
    H_true = inst.utilities()
    stride = math.ceil(T / 200)

    total_queue = np.zeros(T)
    cum_regret = np.zeros(T)
    est_error = np.full(T, np.nan)
    queue = QueueState.empty(inst.N)
    q_max = 0
    regret = 0.0
    for i in range(T):
        total_queue[i] = queue.q.sum()
        q_max = max(q_max, int(queue.q.max()))
        new_queue, record = step(inst, queue, policy, streams, H_true)
        regret += record.regret_increment
        cum_regret[i] = regret
        if policy.estimators is not None and queue.t % stride == 0:
            est_error[i] = np.mean(
                [np.linalg.norm(s.theta_hat - th) for s, th in zip(policy.estimators, inst.theta)]
            )
        if on_step is not None:
            on_step(queue, record, new_queue)
        queue = new_queue
    return RunMetrics(total_queue, cum_regret, est_error, q_max, kind.value, seed)


def average_queue_length(metrics: RunMetrics, window: tuple) -> float:
    """Mean total queue over rounds ``t0 < t <= t1`` (1-based rounds)."""
    t0, t1 = window
    if not (0 <= t0 < t1 <= metrics.T):
        raise ValueError(f"window {window} is not within [0, {metrics.T}]")
    return float(np.mean(metrics.total_queue[t0:t1]))


@dataclass
class EstimationTrace:
    """Estimator trajectory under scheduling that ignores queues."""

    errors: np.ndarray  # (T, K) Euclidean error after absorbing round t
    vnorm_errors: np.ndarray  # (T, K) ||theta_hat - theta||_V after absorbing round t
    betas: np.ndarray  # (T,) beta at round t + 1, the radius used for the next decision
    states: list = field(default_factory=list)


def estimation_run(
    inst: Instance, T: int, seed: int, c1: float = 1.0, lambda_reg: float = 1.0,
    kappa: Optional[float] = None,
) -> EstimationTrace:
    """Offer all agents through uniformly random feasible maps and feed the estimators.

    The estimate after round ``t`` is the one used for the decision at ``t + 1``
    and is checked against the radius ``beta(t + 1)``.
    """
    kappa = inst.kappa if kappa is None else kappa
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(POLICY, len(_KIND_CODE))))
    states = [est.init_estimator(inst.d, lambda_reg) for _ in range(inst.K)]
    H = inst.utilities()
    errors = np.zeros((T, inst.K))
    vnorm = np.zeros((T, inst.K))
    betas = np.zeros(T)
    everyone = range(inst.N)
    for t in range(T):
        assignment = random_assignment(everyone, inst.K, inst.L, rng)
        for k, S in enumerate(assignment.assortments(inst.K)):
            if not S:
                continue
            chosen = mnl.sample_choice(S, H[:, k], rng)
            states[k] = est.absorb_round(states[k], est.Feedback.from_choice(S, chosen), inst.features, kappa)
        for k, s in enumerate(states):
            diff = s.theta_hat - inst.theta[k]
            errors[t, k] = np.linalg.norm(diff)
            vnorm[t, k] = math.sqrt(diff @ s.V @ diff)
        betas[t] = est.beta(t + 2, inst.d, kappa, lambda_reg, inst.L, inst.K, c1)
    return EstimationTrace(errors, vnorm, betas, states)
