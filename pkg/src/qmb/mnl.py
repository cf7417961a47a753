"""Multinomial-logit choice kernel.

Utilities are plain reals so the same functions serve true utilities,
optimistic (UCB) utilities and sampled (TS) utilities.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

NULL = -1  # the "no agent" outcome


def _shifted_exp(utilities: np.ndarray) -> tuple[np.ndarray, float]:
    # exp(u - m) and exp(-m), with m = max(0, max u) so nothing overflows
    shift = max(0.0, float(np.max(utilities))) if utilities.size else 0.0
    return np.exp(utilities - shift), float(np.exp(-shift))


def choice_probabilities(S: Sequence[int], utilities) -> tuple[np.ndarray, float]:
    """Return (probabilities of each agent in ``S`` in order, null probability)."""
    u = np.asarray(utilities, dtype=float)
    idx = np.asarray(list(S), dtype=int)
    if idx.size == 0:
        return np.zeros(0), 1.0
    e, e_null = _shifted_exp(u[idx])
    denom = e_null + e.sum()
    return e / denom, e_null / denom


def choice_probability(n: int, S: Sequence[int], utilities) -> float:
    S = list(S)
    if n not in S:
        raise ValueError(f"agent {n} is not in the assortment {S}")
    probs, _ = choice_probabilities(S, utilities)
    return float(probs[S.index(n)])


def null_probability(S: Sequence[int], utilities) -> float:
    return choice_probabilities(S, utilities)[1]


def sample_choice(S: Sequence[int], utilities, rng: np.random.Generator) -> int:
    """Sample the accepted agent, or ``NULL``.

    Always consumes exactly one uniform variate from ``rng``.
    """
    S = list(S)
    r = rng.random()
    if not S:
        return NULL
    probs, _ = choice_probabilities(S, utilities)
    acc = 0.0
    for n, p in zip(S, probs):
        acc += p
        if r < acc:
            return n
    return NULL


def assortment_value(S: Sequence[int], weights, utilities) -> float:
    """Weighted expected service, sum of w_n * mu(n | S)."""
    S = list(S)
    if not S:
        return 0.0
    probs, _ = choice_probabilities(S, utilities)
    w = np.asarray(weights, dtype=float)[S]
    return float(np.dot(w, probs))
