"""Problem instances: features, arm parameters, arrival rates."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import mnl


@dataclass(frozen=True)
class InstanceConfig:
    N: int = 4
    K: int = 2
    L: int = 2
    d: int = 2
    epsilon: float = 0.1
    seed: int = 0
    # "clip": rescale only vectors with norm > 1; "unit": rescale every vector to norm 1
    normalize: str = "clip"
    # "bound": worst case over all unit-ball features; "instance": infimum for these features
    kappa_mode: str = "bound"

    def __post_init__(self):
        for name in ("N", "K", "L", "d"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.N > self.K * self.L:
            raise ValueError(f"N={self.N} exceeds K*L={self.K * self.L}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.normalize not in ("clip", "unit"):
            raise ValueError(f"normalize must be 'clip' or 'unit', got {self.normalize!r}")
        if self.kappa_mode not in ("bound", "instance"):
            raise ValueError(f"kappa_mode must be 'bound' or 'instance', got {self.kappa_mode!r}")


@dataclass(frozen=True, eq=False)
class Instance:
    """Ground truth of one queueing matching problem.

    ``witness[n]`` is the arm agent ``n`` occupies in a feasible partition
    under which every agent is served at least ``epsilon`` faster than it
    receives jobs.
    """

    N: int
    K: int
    L: int
    d: int
    features: np.ndarray  # (N, d)
    theta: np.ndarray  # (K, d)
    lambdas: np.ndarray  # (N,)
    epsilon: float
    kappa: float
    witness: tuple = field(default=())

    def utilities(self) -> np.ndarray:
        """True utilities x_n . theta_k as an (N, K) matrix."""
        return self.features @ self.theta.T

    def witness_assortments(self) -> list[list[int]]:
        groups: list[list[int]] = [[] for _ in range(self.K)]
        for n, k in enumerate(self.witness):
            groups[k].append(n)
        return groups

    def witness_rates(self) -> np.ndarray:
        """Service rate of each agent under the witness partition."""
        H = self.utilities()
        rates = np.zeros(self.N)
        for k, S in enumerate(self.witness_assortments()):
            if S:
                probs, _ = mnl.choice_probabilities(S, H[:, k])
                rates[S] = probs
        return rates

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "n": self.N,
            "k": self.K,
            "l": self.L,
            "d": self.d,
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "features": self.features.tolist(),
            "theta": self.theta.tolist(),
            "lambdas": self.lambdas.tolist(),
            "witness": list(self.witness),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Instance":
        return cls(
            N=int(doc["n"]),
            K=int(doc["k"]),
            L=int(doc["l"]),
            d=int(doc["d"]),
            features=np.asarray(doc["features"], dtype=float).reshape(int(doc["n"]), int(doc["d"])),
            theta=np.asarray(doc["theta"], dtype=float).reshape(int(doc["k"]), int(doc["d"])),
            lambdas=np.asarray(doc["lambdas"], dtype=float),
            epsilon=float(doc["epsilon"]),
            kappa=float(doc["kappa"]),
            witness=tuple(int(k) for k in doc.get("witness", ())),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))


def compute_kappa_bound(L: int) -> float:
    """Worst-case lower bound on mu(n|S) * mu(null|S) when |S| <= L and |utilities| <= 1."""
    if L < 1:
        raise ValueError(f"L must be at least 1, got {L}")
    return math.exp(-1.0) / (1.0 + L * math.e) ** 2


def compute_instance_kappa(features, L: int, n_directions: int = 4096, seed: int = 0) -> float:
    """inf over ||theta|| <= 1, |S| <= L, n in S of mu(n|S) * mu(null|S) for known features.

    log(mu_n * mu_0) is concave in theta, so the infimum lies on the unit
    sphere. Each (n, S) is searched over a direction cloud and the best
    direction is polished by projected gradient descent on the sphere.
    """
    if L < 1:
        raise ValueError(f"L must be at least 1, got {L}")
    X = np.asarray(features, dtype=float)
    N, d = X.shape
    rng = np.random.default_rng(seed)
    dirs = [rng.standard_normal((n_directions, d)), np.eye(d), -np.eye(d)]
    norms = np.linalg.norm(X, axis=1)
    nz = X[norms > 0] / norms[norms > 0, None]
    dirs += [nz, -nz]
    if d == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, 20_000, endpoint=False)
        dirs.append(np.stack([np.cos(ang), np.sin(ang)], axis=1))
    D = np.concatenate(dirs)
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    U_all = X @ D.T

    def log_obj(theta, n, S):
        u = X[S] @ theta
        top = max(0.0, float(u.max()))
        lse = top + math.log(math.exp(-top) + float(np.exp(u - top).sum()))
        return float(X[n] @ theta) - 2.0 * lse

    def grad(theta, n, S):
        u = X[S] @ theta
        top = max(0.0, float(u.max()))
        e = np.exp(u - top)
        p = e / (math.exp(-top) + e.sum())
        return X[n] - 2.0 * (p @ X[S])

    best = math.inf
    for size in range(1, min(L, N) + 1):
        for S in itertools.combinations(range(N), size):
            S = list(S)
            U = U_all[S]
            top = np.maximum(0.0, U.max(axis=0))
            lse = top + np.log(np.exp(-top) + np.exp(U - top).sum(axis=0))
            for i, n in enumerate(S):
                vals = U[i] - 2.0 * lse
                j = int(np.argmin(vals))
                theta, val = D[j].copy(), float(vals[j])
                step = 0.1
                for _ in range(200):
                    g = grad(theta, n, S)
                    g -= (g @ theta) * theta
                    if np.linalg.norm(g) < 1e-12 or step < 1e-12:
                        break
                    cand = theta - step * g
                    cand /= np.linalg.norm(cand)
                    cval = log_obj(cand, n, S)
                    if cval < val:
                        theta, val = cand, cval
                        step *= 1.5
                    else:
                        step *= 0.5
                best = min(best, val)
    return math.exp(best)


def polarized_instance(epsilon: float = 0.05, kappa_mode: str = "bound") -> Instance:
    """Two agent groups with opposite features and two arms each preferring one group.

    Only the matched partition leaves slack ``epsilon``; a uniformly random
    partition serves every agent below its arrival rate on average.
    """
    features = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
    theta = np.array([[1.0, 0.0], [-1.0, 0.0]])
    kappa = compute_kappa_bound(2) if kappa_mode == "bound" else compute_instance_kappa(features, 2)
    inst = Instance(4, 2, 2, 2, features, theta, np.zeros(4), epsilon, kappa, (0, 0, 1, 1))
    object.__setattr__(inst, "lambdas", np.maximum(0.0, inst.witness_rates() - epsilon))
    return inst


def _normalize_rows(X: np.ndarray, mode: str) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if mode == "unit":
        scale = np.where(norms > 0, norms, 1.0)
    else:
        scale = np.where(norms > 1.0, norms, 1.0)
    return X / scale


def generate_instance(config: InstanceConfig) -> Instance:
    rng = np.random.default_rng(config.seed)
    features = _normalize_rows(rng.uniform(0.0, 1.0, size=(config.N, config.d)), config.normalize)
    theta = _normalize_rows(rng.uniform(0.0, 1.0, size=(config.K, config.d)), config.normalize)
    order = rng.permutation(config.N)
    witness = [0] * config.N
    for i, n in enumerate(order):
        witness[int(n)] = i % config.K
    inst = Instance(
        N=config.N,
        K=config.K,
        L=config.L,
        d=config.d,
        features=features,
        theta=theta,
        lambdas=np.zeros(config.N),
        epsilon=config.epsilon,
        kappa=compute_kappa_bound(config.L)
        if config.kappa_mode == "bound"
        else compute_instance_kappa(features, config.L),
        witness=tuple(witness),
    )
    lambdas = np.maximum(0.0, inst.witness_rates() - config.epsilon)
    object.__setattr__(inst, "lambdas", lambdas)
    return inst


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_instance(inst: Instance, tol: float = 1e-12) -> ValidationReport:
    report = ValidationReport()
    v = report.violations
    if min(inst.N, inst.K, inst.L, inst.d) < 1:
        v.append("dimensions N, K, L, d must be positive")
        return report
    if inst.N > inst.K * inst.L:
        v.append(f"N={inst.N} exceeds K*L={inst.K * inst.L}")
    if inst.features.shape != (inst.N, inst.d):
        v.append(f"features has shape {inst.features.shape}, expected {(inst.N, inst.d)}")
    if inst.theta.shape != (inst.K, inst.d):
        v.append(f"theta has shape {inst.theta.shape}, expected {(inst.K, inst.d)}")
    if inst.lambdas.shape != (inst.N,):
        v.append(f"lambdas has shape {inst.lambdas.shape}, expected {(inst.N,)}")
    if v:
        return report
    for n, x in enumerate(inst.features):
        if np.linalg.norm(x) > 1.0 + tol:
            v.append(f"feature norm of agent {n} is {np.linalg.norm(x):.6g} > 1")
    for k, th in enumerate(inst.theta):
        if np.linalg.norm(th) > 1.0 + tol:
            v.append(f"theta norm of arm {k} is {np.linalg.norm(th):.6g} > 1")
    for n, lam in enumerate(inst.lambdas):
        if not 0.0 <= lam <= 1.0:
            v.append(f"arrival rate of agent {n} is {lam!r}, outside [0, 1]")
    if not 0.0 < inst.epsilon < 1.0:
        v.append(f"epsilon {inst.epsilon!r} outside (0, 1)")
    if not 0.0 < inst.kappa <= 1.0:
        v.append(f"kappa {inst.kappa!r} outside (0, 1]")
    elif inst.kappa > compute_kappa_bound(inst.L):
        # above the worst-case bound: check it against every small assortment
        H = inst.utilities()
        for size in range(1, min(inst.L, inst.N) + 1):
            for S in itertools.combinations(range(inst.N), size):
                for k in range(inst.K):
                    probs, p0 = mnl.choice_probabilities(S, H[:, k])
                    worst = float(probs.min()) * p0
                    if worst < inst.kappa:
                        v.append(f"kappa {inst.kappa:.6g} exceeds mu*mu0 = {worst:.6g} at arm {k}, S={S}")
                        break
                else:
                    continue
                break
    if len(inst.witness) != inst.N:
        v.append("slackness witness missing or of wrong length")
        return report
    if any(not 0 <= k < inst.K for k in inst.witness):
        v.append("slackness witness names an arm outside [0, K)")
        return report
    loads = np.bincount(np.asarray(inst.witness, dtype=int), minlength=inst.K)
    if loads.max() > inst.L:
        v.append(f"slackness witness puts {loads.max()} agents on one arm (capacity {inst.L})")
        return report
    rates = inst.witness_rates()
    for n in range(inst.N):
        slack = rates[n] - inst.lambdas[n]
        if slack + tol < inst.epsilon:
            v.append(
                f"traffic slackness fails for agent {n}: service {rates[n]:.6g} - arrival "
                f"{inst.lambdas[n]:.6g} < epsilon {inst.epsilon:.6g}"
            )
    return report
