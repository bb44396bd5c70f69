"""Conic solver stack: presolve, interior-point SOCP solver and branch-and-bound."""

from .bnb import (
    STATUS_INFEASIBLE,
    STATUS_NODE_LIMIT,
    STATUS_OPTIMAL,
    STATUS_TIME_LIMIT,
    Relaxation,
    SolveReport,
    SolveSettings,
    branch_and_bound,
    relative_gap,
    solve_relaxation,
    solve_socp,
)
from .ipm import IPMResult, IPMSettings, solve_standard
from .kernels import BACKEND
from .standard import PresolveInfeasible, StandardForm, to_standard

__all__ = [
    "BACKEND",
    "IPMResult",
    "IPMSettings",
    "PresolveInfeasible",
    "Relaxation",
    "STATUS_INFEASIBLE",
    "STATUS_NODE_LIMIT",
    "STATUS_OPTIMAL",
    "STATUS_TIME_LIMIT",
    "SolveReport",
    "SolveSettings",
    "StandardForm",
    "branch_and_bound",
    "relative_gap",
    "solve_relaxation",
    "solve_socp",
    "solve_standard",
    "to_standard",
]
