"""MaxWeight assortment search over feasible disjoint assignments.

An assignment maps every active agent to one arm with at most ``L`` agents
per arm. The objective is sum_k sum_{n in S_k} w_n * mu(n | S_k, H[:, k]).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from . import mnl

DEFAULT_EXACT_CAP = 10**6
_ARRAY_CACHE_LIMIT = 20_000


class ExactSolveTooLarge(ValueError):
    """Raised when exhaustive search would enumerate more maps than allowed; use solve_greedy."""


@dataclass(frozen=True)
class Assignment:
    agents: tuple = ()  # sorted active agents
    arms: tuple = ()  # arm of agents[i]

    @property
    def arm_of(self) -> dict:
        return dict(zip(self.agents, self.arms))

    def assortments(self, K: int) -> list[list[int]]:
        groups: list[list[int]] = [[] for _ in range(K)]
        for n, k in zip(self.agents, self.arms):
            groups[k].append(n)
        return groups

    def loads(self, K: int) -> list[int]:
        return [len(S) for S in self.assortments(K)]

    def is_feasible(self, active: Sequence[int], K: int, L: int) -> bool:
        if tuple(self.agents) != tuple(sorted(set(active))):
            return False
        if any(not 0 <= k < K for k in self.arms):
            return False
        return max(self.loads(K), default=0) <= L


def _check_feasible(m: int, K: int, L: int) -> None:
    if m > K * L:
        raise ValueError(f"{m} active agents cannot be placed on {K} arms of capacity {L}")


@lru_cache(maxsize=None)
def _count(r: int, caps: tuple) -> int:
    # maps of r labelled agents onto arms with remaining capacities caps
    if not caps:
        return 1 if r == 0 else 0
    first, rest = caps[0], caps[1:]
    return sum(math.comb(r, j) * _count(r - j, rest) for j in range(min(first, r) + 1))


def count_completions(r: int, caps: Sequence[int]) -> int:
    return _count(r, tuple(sorted(int(c) for c in caps)))


def count_feasible(m: int, K: int, L: int) -> int:
    """Number of feasible maps of ``m`` agents onto ``K`` arms of capacity ``L``."""
    return count_completions(m, [L] * K)


def _arm_tuples(m: int, K: int, L: int) -> Iterator[tuple]:
    loads = [0] * K
    current: list[int] = []

    def rec(i):
        if i == m:
            yield tuple(current)
            return
        for k in range(K):
            if loads[k] < L:
                loads[k] += 1
                current.append(k)
                yield from rec(i + 1)
                current.pop()
                loads[k] -= 1

    yield from rec(0)


def enumerate_feasible(active: Sequence[int], K: int, L: int) -> Iterator[Assignment]:
    """Yield every feasible assignment once, lexicographically by arm tuple."""
    agents = tuple(sorted(set(int(n) for n in active)))
    _check_feasible(len(agents), K, L)
    for arms in _arm_tuples(len(agents), K, L):
        yield Assignment(agents, arms)


@lru_cache(maxsize=64)
def _map_table(m: int, K: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    A = np.array(list(_arm_tuples(m, K, L)), dtype=np.intp).reshape(-1, m)
    onehot = (A[:, :, None] == np.arange(K)).astype(float)
    return A, onehot


def objective(assignment: Assignment, weights, H: np.ndarray) -> float:
    K = H.shape[1]
    return sum(
        mnl.assortment_value(S, weights, H[:, k]) for k, S in enumerate(assignment.assortments(K))
    )


def _values(agents: np.ndarray, A: np.ndarray, onehot: np.ndarray, w: np.ndarray, H: np.ndarray):
    U = H[agents[None, :], A]
    shift = max(0.0, float(U.max()))
    E = np.exp(U - shift)
    denom = np.exp(-shift) + np.einsum("cm,cmk->ck", E, onehot)
    D = np.take_along_axis(denom, A, axis=1)
    return (E / D) @ w[agents]


def solve_exact(weights, H, active, K: int, L: int, cap: int = DEFAULT_EXACT_CAP):
    """Exhaustive MaxWeight; ties go to the lexicographically smallest arm tuple."""
    agents = tuple(sorted(set(int(n) for n in active)))
    m = len(agents)
    _check_feasible(m, K, L)
    total = count_feasible(m, K, L)
    if total > cap:
        raise ExactSolveTooLarge(
            f"exact search needs {total} maps (cap {cap}); use solve_greedy instead"
        )
    if m == 0:
        return Assignment(), 0.0
    w = np.asarray(weights, dtype=float)
    H = np.asarray(H, dtype=float)
    idx = np.asarray(agents, dtype=np.intp)
    if total <= _ARRAY_CACHE_LIMIT:
        A, onehot = _map_table(m, K, L)
        values = _values(idx, A, onehot, w, H)
        best = int(np.argmax(values))
        return Assignment(agents, tuple(int(k) for k in A[best])), float(values[best])
    best_value, best_arms = -math.inf, None
    chunk: list[tuple] = []

    def flush():
        nonlocal best_value, best_arms
        A = np.array(chunk, dtype=np.intp)
        values = _values(idx, A, (A[:, :, None] == np.arange(K)).astype(float), w, H)
        i = int(np.argmax(values))
        if values[i] > best_value:
            best_value, best_arms = float(values[i]), tuple(int(k) for k in A[i])
        chunk.clear()

    for arms in _arm_tuples(m, K, L):
        chunk.append(arms)
        if len(chunk) == _ARRAY_CACHE_LIMIT:
            flush()
    if chunk:
        flush()
    return Assignment(agents, best_arms), best_value


def solve_greedy(weights, H, active, K: int, L: int):
    """Place agents one at a time by largest marginal gain in the objective.

    Every active agent must be placed, so a negative gain is accepted when
    nothing better remains. Ties go to the smallest (agent, arm).
    """
    agents = tuple(sorted(set(int(n) for n in active)))
    _check_feasible(len(agents), K, L)
    w = np.asarray(weights, dtype=float)
    H = np.asarray(H, dtype=float)
    groups: list[list[int]] = [[] for _ in range(K)]
    current = [0.0] * K
    arm_of: dict[int, int] = {}
    remaining = list(agents)
    while remaining:
        best = None
        for n in remaining:
            for k in range(K):
                if len(groups[k]) >= L:
                    continue
                new = mnl.assortment_value(groups[k] + [n], w, H[:, k])
                gain = new - current[k]
                if best is None or gain > best[0]:
                    best = (gain, n, k, new)
        _, n, k, new = best
        groups[k].append(n)
        current[k] = new
        arm_of[n] = k
        remaining.remove(n)
    assignment = Assignment(agents, tuple(arm_of[n] for n in agents))
    return assignment, float(sum(current))


def solve(weights, H, active, K: int, L: int, cap: int = DEFAULT_EXACT_CAP):
    """Exact search when it fits under ``cap`` maps, greedy otherwise.

    Returns ``(assignment, value, method)`` with method ``"exact"`` or ``"greedy"``.
    """
    m = len(set(active))
    _check_feasible(m, K, L)
    if count_feasible(m, K, L) <= cap:
        assignment, value = solve_exact(weights, H, active, K, L, cap)
        return assignment, value, "exact"
    assignment, value = solve_greedy(weights, H, active, K, L)
    return assignment, value, "greedy"
