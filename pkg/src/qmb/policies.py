"""Scheduling policies: known-parameter MaxWeight, UCB-QMB, TS-QMB and a random baseline."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimator as est
from .model import Instance
from .optimizer import DEFAULT_EXACT_CAP, Assignment, count_completions, solve


class PolicyKind(str, enum.Enum):
    ORACLE = "oracle"
    UCB_QMB = "ucb-qmb"
    TS_QMB = "ts-qmb"
    RANDOM = "random"

    @property
    def learns(self) -> bool:
        return self in (PolicyKind.UCB_QMB, PolicyKind.TS_QMB)


@dataclass(frozen=True)
class PolicyParams:
    c1: float = 1.0
    lambda_reg: float = 1.0
    ts_m: Optional[int] = None  # None: derived from K and L
    exact_cap: int = DEFAULT_EXACT_CAP
    kappa: Optional[float] = None  # None: use the instance's kappa
    schedule_after_arrivals: bool = False

    def __post_init__(self):
        if self.c1 < 0:
            raise ValueError(f"c1 must be nonnegative, got {self.c1}")
        if not self.lambda_reg > 0:
            raise ValueError(f"lambda_reg must be positive, got {self.lambda_reg}")
        if self.ts_m is not None and self.ts_m < 1:
            raise ValueError(f"ts_m must be at least 1, got {self.ts_m}")
        if self.exact_cap < 0:
            raise ValueError(f"exact_cap must be nonnegative, got {self.exact_cap}")
        if self.kappa is not None and not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")


@dataclass
class PolicyState:
    kind: PolicyKind
    params: PolicyParams = field(default_factory=PolicyParams)
    estimators: Optional[list] = None
    ts_m: int = 1
    kappa: float = 1.0

    @property
    def c1(self) -> float:
        return self.params.c1


def ts_sample_count(K: int, L: int) -> int:
    """Number of posterior samples per arm for TS-QMB."""
    if K * L < 1:
        raise ValueError("K*L must be at least 1")
    m = math.ceil(1.0 - math.log(K * L) / math.log(1.0 - 1.0 / (4.0 * math.sqrt(math.e * math.pi))))
    return max(1, m)


def make_policy(kind, inst: Instance, params: Optional[PolicyParams] = None) -> PolicyState:
    kind = PolicyKind(kind)
    params = params or PolicyParams()
    estimators = [est.init_estimator(inst.d, params.lambda_reg) for _ in range(inst.K)] if kind.learns else None
    return PolicyState(
        kind=kind,
        params=params,
        estimators=estimators,
        ts_m=params.ts_m if params.ts_m is not None else ts_sample_count(inst.K, inst.L),
        kappa=params.kappa if params.kappa is not None else inst.kappa,
    )


def oracle_utilities(inst: Instance) -> np.ndarray:
    return inst.utilities()


def _bonuses(X: np.ndarray, V: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(V)
    Z = np.linalg.solve(chol, X.T)
    return np.sqrt(np.sum(Z * Z, axis=0))


def ucb_utilities(state: PolicyState, features, t, L, K, kappa, lambda_reg) -> np.ndarray:
    """Optimistic utilities x.theta_hat + beta_t * ||x||_{V^-1}, one column per arm."""
    X = np.asarray(features, dtype=float)
    b = est.beta(t, X.shape[1], kappa, lambda_reg, L, K, state.c1)
    H = np.empty((X.shape[0], K))
    for k, s in enumerate(state.estimators):
        H[:, k] = X @ s.theta_hat + b * _bonuses(X, s.V)
    return H


def ts_utilities(
    state: PolicyState, features, t, rng: np.random.Generator, L, K, kappa, lambda_reg,
    beta_t: Optional[float] = None,
) -> np.ndarray:
    """Per arm, the max over ``ts_m`` draws from N(theta_hat, beta_t^2 V^-1) of x.theta.

    Consumes ``ts_m * d`` standard normals per arm, arms in order.
    """
    X = np.asarray(features, dtype=float)
    d = X.shape[1]
    b = est.beta(t, d, kappa, lambda_reg, L, K, state.c1) if beta_t is None else beta_t
    H = np.empty((X.shape[0], K))
    for k, s in enumerate(state.estimators):
        z = rng.standard_normal((state.ts_m, d))
        try:
            chol = np.linalg.cholesky(s.V)
        except np.linalg.LinAlgError as exc:
            raise est.ProjectionError(f"cannot factor V of arm {k}", float("nan")) from exc
        # chol^-T z has covariance V^-1
        samples = s.theta_hat + b * np.linalg.solve(chol.T, z.T).T
        # matvec per sample keeps beta_t = 0 bit-identical to the plug-in utilities
        H[:, k] = np.max([X @ theta for theta in samples], axis=0)
    return H


def random_assignment(active, K: int, L: int, rng: np.random.Generator) -> Assignment:
    """Uniformly random feasible map, one uniform draw per agent.

    Each agent picks an arm with probability proportional to the number of
    feasible completions left after that choice.
    """
    agents = tuple(sorted(set(int(n) for n in active)))
    if len(agents) > K * L:
        raise ValueError(f"{len(agents)} active agents cannot be placed on {K} arms of capacity {L}")
    caps = [L] * K
    arms = []
    for i in range(len(agents)):
        r = len(agents) - i - 1
        counts = []
        for k in range(K):
            if caps[k] == 0:
                counts.append(0)
            else:
                caps[k] -= 1
                counts.append(count_completions(r, caps))
                caps[k] += 1
        total = sum(counts)
        u = rng.random() * total
        acc, choice = 0, None
        for k, c in enumerate(counts):
            acc += c
            if c and u < acc:
                choice = k
                break
        if choice is None:  # u landed on the float boundary
            choice = max(k for k, c in enumerate(counts) if c)
        caps[choice] -= 1
        arms.append(choice)
    return Assignment(agents, tuple(arms))


def utility_matrix(policy: PolicyState, inst: Instance, t: int, rng: np.random.Generator) -> np.ndarray:
    p = policy.params
    if policy.kind is PolicyKind.ORACLE:
        return oracle_utilities(inst)
    if policy.kind is PolicyKind.UCB_QMB:
        return ucb_utilities(policy, inst.features, t, inst.L, inst.K, policy.kappa, p.lambda_reg)
    if policy.kind is PolicyKind.TS_QMB:
        return ts_utilities(policy, inst.features, t, rng, inst.L, inst.K, policy.kappa, p.lambda_reg)
    raise ValueError(f"{policy.kind} does not score agents")


def schedule(policy: PolicyState, inst: Instance, q, t: int, rng: np.random.Generator) -> Assignment:
    """Pick this round's assignment of the agents with nonempty queues."""
    q = np.asarray(q)
    active = [int(n) for n in np.flatnonzero(q > 0)]
    if policy.kind is PolicyKind.RANDOM:
        return random_assignment(active, inst.K, inst.L, rng)
    # TS draws its samples every round so rng use depends only on (M, d, K)
    H = utility_matrix(policy, inst, t, rng)
    if not active:
        return Assignment()
    assignment, _, _ = solve(q.astype(float), H, active, inst.K, inst.L, policy.params.exact_cap)
    return assignment


def absorb_feedback(policy: PolicyState, inst: Instance, feedback: list) -> None:
    """Update each arm's estimator with its round feedback; arms offered nobody are skipped."""
    if not policy.kind.learns:
        return
    for k, fb in enumerate(feedback):
        if fb is not None and fb.assortment:
            policy.estimators[k] = est.absorb_round(policy.estimators[k], fb, inst.features, policy.kappa)
