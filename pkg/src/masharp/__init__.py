"""Monotone finite-difference solver and boundary-estimate harness for the
Dirichlet Monge-Ampere problem det D^2 u = f (optionally f |u|^s), u = 0 on
the boundary of a convex domain."""

from .geometry import ConvexDomain, Grid, build_grid, dist_to_boundary, interior_shrink
from .hessian import HessianField, hadamard_report, hessian_field
from .oracle import oliker_prussner_oracle
from .solver import GridField, ProblemSpec, SolveReport, SolverConfig, solve_degenerate, solve_dirichlet
from .stencil import discrete_ma_operator

__version__ = "0.1.0"

__all__ = [
    "ConvexDomain",
    "Grid",
    "GridField",
    "HessianField",
    "ProblemSpec",
    "SolveReport",
    "SolverConfig",
    "build_grid",
    "discrete_ma_operator",
    "dist_to_boundary",
    "hadamard_report",
    "hessian_field",
    "interior_shrink",
    "oliker_prussner_oracle",
    "solve_degenerate",
    "solve_dirichlet",
]
