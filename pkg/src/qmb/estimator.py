"""Online Newton step estimation of one arm's preference parameter."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import mnl


class ProjectionError(RuntimeError):
    """Root-finding for the constrained Newton step did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class EstimatorState:
    theta_hat: np.ndarray
    V: np.ndarray
    lambda_reg: float
    updates: int = 0

    def copy(self) -> "EstimatorState":
        return EstimatorState(self.theta_hat.copy(), self.V.copy(), self.lambda_reg, self.updates)


@dataclass(frozen=True)
class Feedback:
    """One arm's round: the offered agents and who was accepted (``y[i]`` for ``assortment[i]``)."""

    assortment: tuple
    y: tuple

    def __post_init__(self):
        if len(self.assortment) != len(self.y):
            raise ValueError("one outcome per offered agent is required")
        if len(set(self.assortment)) != len(self.assortment):
            raise ValueError(f"duplicate agents in assortment {self.assortment}")
        if any(v not in (0, 1) for v in self.y):
            raise ValueError(f"outcomes must be 0/1, got {self.y}")
        if sum(self.y) > 1:
            raise ValueError("an arm accepts at most one agent per round")

    @classmethod
    def from_choice(cls, assortment: Sequence[int], chosen: int) -> "Feedback":
        S = tuple(int(n) for n in assortment)
        return cls(S, tuple(int(n == chosen) for n in S))


def init_estimator(d: int, lambda_reg: float = 1.0) -> EstimatorState:
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    if not lambda_reg > 0:
        raise ValueError(f"lambda_reg must be positive, got {lambda_reg}")
    return EstimatorState(np.zeros(d), lambda_reg * np.eye(d), float(lambda_reg))


def gradient(theta: np.ndarray, feedback: Feedback, features: np.ndarray) -> np.ndarray:
    """Gradient of the round's MNL negative log-likelihood at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if not feedback.assortment:
        return np.zeros_like(theta)
    S = list(feedback.assortment)
    X = features[S]
    probs, _ = mnl.choice_probabilities(range(len(S)), X @ theta)
    return X.T @ (probs - np.asarray(feedback.y, dtype=float))


def _check_spd(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1] or not np.allclose(V, V.T, rtol=1e-12, atol=1e-12):
        raise ValueError("V must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        raise ValueError("V is not positive definite") from None


def project_ball_vnorm(target, V, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Closest point of the Euclidean unit ball to ``target`` in the V-norm.

    Outside the ball the minimizer is (V + eta I)^-1 V target for the eta > 0
    that puts it on the sphere; eta is found by bisection.
    """
    target = np.asarray(target, dtype=float)
    _check_spd(V)
    if np.linalg.norm(target) <= 1.0:
        return target.copy()
    evals, Q = np.linalg.eigh(V)
    c = Q.T @ target

    def radius(eta: float) -> float:
        return float(np.linalg.norm(evals * c / (evals + eta)))

    lo, hi = 0.0, float(evals.max() * np.linalg.norm(target))
    r_hi = radius(hi)
    for _ in range(max_iter):
        if abs(r_hi - 1.0) <= tol:
            break
        mid = 0.5 * (lo + hi)
        r_mid = radius(mid)
        if r_mid > 1.0:
            lo = mid
        else:
            hi, r_hi = mid, r_mid
    else:
        raise ProjectionError("bisection for the projection multiplier did not converge", abs(r_hi - 1.0))
    return Q @ (evals * c / (evals + hi))


def absorb_round(
    state: EstimatorState, feedback: Feedback, features: np.ndarray, kappa: float
) -> EstimatorState:
    """Fold one round of feedback into the estimate (returns a new state)."""
    S = list(feedback.assortment)
    X = features[S]
    V = state.V + 0.5 * kappa * (X.T @ X)
    g = gradient(state.theta_hat, feedback, features)
    step = np.linalg.solve(V, g) if S else np.zeros_like(g)
    theta = project_ball_vnorm(state.theta_hat - step, V)
    return EstimatorState(theta, V, state.lambda_reg, state.updates + 1)


def beta(t: float, d: int, kappa: float, lambda_reg: float, L: int, K: int, c1: float) -> float:
    """Confidence radius at round ``t``."""
    return c1 * math.sqrt(lambda_reg + (d / kappa) * math.log(1.0 + t * L * K / (d * lambda_reg)))


def bonus(x, V) -> float:
    """||x||_{V^-1} via a Cholesky solve."""
    chol = _check_spd(V)
    z = np.linalg.solve(chol, np.asarray(x, dtype=float))
    return float(np.sqrt(z @ z))
