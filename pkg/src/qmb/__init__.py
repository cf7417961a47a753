"""Queueing matching bandits with multinomial-logit service feedback."""

from .model import Instance, InstanceConfig, compute_kappa_bound, generate_instance, validate_instance
from .optimizer import Assignment, solve, solve_exact, solve_greedy
from .policies import PolicyKind, PolicyParams
from .simulator import RunMetrics, run

__all__ = [
    "Assignment",
    "Instance",
    "InstanceConfig",
    "PolicyKind",
    "PolicyParams",
    "RunMetrics",
    "compute_kappa_bound",
    "generate_instance",
    "run",
    "solve",
    "solve_exact",
    "solve_greedy",
    "validate_instance",
]
