"""Damped Newton solver for the Dirichlet Monge-Ampere problem.

``solve_dirichlet`` handles det D^2 u = f, u = 0 on the boundary;
``solve_degenerate`` wraps it in a relaxed fixed point for
det D^2 u = f |u|^s.  ``solve_coupled`` is an independent monolithic Newton
solve of the degenerate system, kept as a cross-check of the fixed point.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from .errors import DivergenceError, SpecError, TrivialBranchError
from .expression import Expression
from .geometry import ConvexDomain, Grid, diameter
from .stencil import Stencil, basis_values, build_stencil, second_differences

log = logging.getLogger(__name__)


@dataclass
class ProblemSpec:
    """A Dirichlet Monge-Ampere instance plus the estimate-harness parameters."""

    domain: ConvexDomain
    f: Expression
    lam: float
    Lam: float
    s: float = 0.0
    gamma: float = 1.1
    deltas: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0, 1.25, 1.5])
    hs: list[float] | None = None
    mu1: float | None = None
    mu2: float | None = None

    def __post_init__(self):
        if isinstance(self.f, str):
            self.f = Expression(self.f)
        n = self.domain.dim
        if not 0 < self.lam <= self.Lam:
            raise SpecError("need 0 < lambda <= Lambda")
        if self.s != 0 and not self.s < n - 2:
            raise SpecError(f"degeneracy power s must satisfy s < n - 2 = {n - 2}")
        if not 1 < self.gamma < 2:
            raise SpecError("gamma must lie in (1, 2)")
        if 0 < self.s < n - 2:
            if self.mu1 is None or self.mu2 is None:
                raise SpecError("mu1 and mu2 are required when 0 < s < n - 2")
            if not 0 < self.mu1 < 2 / (n - self.s) < self.mu2 < 1:
                raise SpecError("need 0 < mu1 < 2/(n-s) < mu2 < 1")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def penalty(self) -> float:
        return self.Lam + 1.0

    def f_values(self, grid: Grid) -> np.ndarray:
        """f at the interior nodes, after checking the declared bounds."""
        vals = self.f.evaluate(grid.coords()[grid.interior_index])
        if not np.all(np.isfinite(vals)):
            raise SpecError("f is not finite at every interior node")
        lo, hi = vals.min(), vals.max()
        if lo < self.lam * (1 - 1e-12) or hi > self.Lam * (1 + 1e-12):
            raise SpecError(f"f ranges over [{lo:.6g}, {hi:.6g}], outside declared [{self.lam}, {self.Lam}]")
        return vals


@dataclass
class SolverConfig:
    stencil_width: int = 2
    newton_tolerance: float = 1e-8
    max_newton_iters: int = 200
    damping: float = 0.5
    omega: float = 0.5
    max_outer_iters: int = 50
    eps_floor: float = 1e-10  # multiplied by diam(domain)^2

    def __post_init__(self):
        if self.stencil_width not in (1, 2, 3):
            raise SpecError("stencil_width must be 1, 2 or 3")
        if not self.newton_tolerance > 0:
            raise SpecError("newton_tolerance must be positive")
        if not 0 < self.damping < 1:
            raise SpecError("damping must lie in (0, 1)")
        if not 0 < self.omega <= 1:
            raise SpecError("omega must lie in (0, 1]")

    @classmethod
    def for_dim(cls, n: int, **kw) -> SolverConfig:
        kw.setdefault("stencil_width", 2 if n == 2 else 1)
        return cls(**kw)


@dataclass
class GridField:
    """One value per grid node; exterior and boundary-cut nodes hold 0."""

    grid: Grid
    values: np.ndarray

    @classmethod
    def from_interior(cls, grid: Grid, interior_values: np.ndarray) -> GridField:
        v = np.zeros(grid.size)
        v[grid.interior_index] = interior_values
        return cls(grid, v)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior_index]

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def prolong(self, fine: Grid) -> np.ndarray:
        """Multilinear interpolation onto the interior nodes of ``fine``."""
        axes = [self.grid.axis_values(i) for i in range(self.grid.dim)]
        interp = RegularGridInterpolator(axes, self.as_array(), bounds_error=False, fill_value=0.0)
        return interp(fine.coords()[fine.interior_index])


@dataclass
class SolveReport:
    converged: bool
    newton_iterations: int
    residual: float
    outer_iterations: int = 0
    wall_time: float = 0.0
    u_min: float = 0.0
    u_max: float = 0.0
    min_second_difference: float = 0.0
    eps_floor: float | None = None
    # degenerate runs: sup |MA_h[u] - f max(|u|, eps)^s| of the returned field
    equation_residual: float | None = None

    def to_dict(self, include_time: bool = False) -> dict:
        d = {
            "converged": self.converged,
            "newton_iterations": self.newton_iterations,
            "residual": self.residual,
            "outer_iterations": self.outer_iterations,
            "u_min": self.u_min,
            "u_max": self.u_max,
            "min_second_difference": self.min_second_difference,
        }
        if self.eps_floor is not None:
            d["eps_floor"] = self.eps_floor
        if self.equation_residual is not None:
            d["equation_residual"] = self.equation_residual
        if include_time:
            d["wall_time"] = self.wall_time
        return d


def initial_guess(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    c, r = spec.domain.bounding_ball()
    x = grid.coords()[grid.interior_index]
    return spec.Lam ** (1.0 / spec.dim) * (((x - c) ** 2).sum(axis=1) - r * r) / 2.0


def _jacobian(st: Stencil, d2: np.ndarray, arg: np.ndarray, penalty: float) -> sp.csr_matrix:
    """Jacobian of the discrete operator with the minimising basis frozen."""
    N = st.n_interior
    n = st.bases.shape[1]
    nodes = np.arange(N)
    chosen = st.bases[arg]  # (N, n) direction indices
    sel = d2[chosen.T, nodes]  # (n, N)
    pos = np.maximum(sel, 0.0)
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    for i in range(n):
        others = np.prod(np.delete(pos, i, axis=0), axis=0)
        coef = np.where(sel[i] > 0, others, penalty)
        di = chosen[:, i]
        ap = st.arm[0][di, nodes]
        am = st.arm[1][di, nodes]
        w = 2.0 / (ap + am)
        diag -= coef * w * (1.0 / ap + 1.0 / am)
        for s, a in ((0, ap), (1, am)):
            nb = st.nbr[s][di, nodes]
            ok = nb >= 0
            rows.append(nodes[ok])
            cols.append(nb[ok])
            vals.append((coef * w / a)[ok])
    rows.append(nodes)
    cols.append(nodes)
    vals.append(diag)
    J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return J.tocsr()


DIRECT_SOLVE_LIMIT = 20000


def _linear_solve(J: sp.csr_matrix, rhs: np.ndarray, dim: int) -> np.ndarray:
    """Solve J x = rhs.

    Sparse LU in 2D and for small systems; classical AMG-preconditioned GMRES
    for large 3D systems, where LU fill-in is prohibitive.
    """
    if dim == 2 or J.shape[0] <= DIRECT_SOLVE_LIMIT:
        return spsolve(J.tocsc(), rhs)
    # -J is an M-matrix (positive diagonal, nonpositive off-diagonals)
    A = (-J).tocsr()
    residuals: list[float] = []
    try:
        ml = pyamg.ruge_stuben_solver(A)
        x = ml.solve(-rhs, tol=1e-11, accel="gmres", maxiter=300, residuals=residuals)
    except (ValueError, ZeroDivisionError, np.linalg.LinAlgError):
        x = np.full_like(rhs, np.nan)
    if not np.isfinite(x).all() or np.linalg.norm(A @ x + rhs) > 1e-8 * max(np.linalg.norm(rhs), 1e-300):
        log.debug("AMG solve stalled after %d iterations; falling back to LU", len(residuals))
        return spsolve(J.tocsc(), rhs)
    return x


def _newton(
    st: Stencil,
    u: np.ndarray,
    residual_fn,
    jacobian_fn,
    config: SolverConfig,
    label: str = "newton",
) -> tuple[np.ndarray, bool, int, float]:
    """Damped Newton with backtracking on the residual sup-norm."""
    r = residual_fn(u)
    res = float(np.abs(r).max())
    it = 0
    while res > config.newton_tolerance and it < config.max_newton_iters:
        it += 1
        J = jacobian_fn(u)
        du = _linear_solve(J, -r, st.grid.dim)
        t = 1.0
        best = None
        while t > 1e-8:
            trial = u + t * du
            r_trial = residual_fn(trial)
            res_trial = float(np.abs(r_trial).max())
            if np.isfinite(res_trial) and (best is None or res_trial < best[2]):
                best = (trial, r_trial, res_trial)
            if res_trial <= (1.0 - 1e-4 * t) * res:
                break
            t *= config.damping
        if best is None or best[2] >= res:
            log.debug("%s: line search stalled at iteration %d, residual %.3e", label, it, res)
            return u, False, it, res
        u, r, res = best
        log.debug("%s: iter %d step %.3g residual %.3e", label, it, t, res)
    return u, res <= config.newton_tolerance, it, res


def _solve_rhs(
    st: Stencil, rhs: np.ndarray, penalty: float, config: SolverConfig, u0: np.ndarray
) -> tuple[np.ndarray, bool, int, float]:
    def residual(u):
        vals = basis_values(st, second_differences(st, u), penalty)
        return vals.min(axis=0) - rhs

    def jacobian(u):
        d2 = second_differences(st, u)
        arg = np.argmin(basis_values(st, d2, penalty), axis=0)
        return _jacobian(st, d2, arg, penalty)

    return _newton(st, u0.copy(), residual, jacobian, config)


def _report(st, u, converged, iters, res, t0, outer=0, eps=None) -> SolveReport:
    d2 = second_differences(st, u)
    return SolveReport(
        converged=bool(converged),
        newton_iterations=int(iters),
        residual=float(res),
        outer_iterations=int(outer),
        wall_time=time.perf_counter() - t0,
        u_min=float(min(u.min(), 0.0)),
        u_max=float(max(u.max(), 0.0)),
        min_second_difference=float(d2.min()),
        eps_floor=eps,
    )


def solve_dirichlet(
    spec: ProblemSpec,
    grid: Grid,
    config: SolverConfig | None = None,
    initial: np.ndarray | None = None,
    stencil: Stencil | None = None,
) -> tuple[GridField, SolveReport]:
    """Solve det D^2 u = f in the domain, u = 0 on its boundary.

    ``initial`` optionally supplies interior values (e.g. a prolonged coarse
    solution); otherwise the bounding-ball paraboloid is used.  Non-convergence
    is reported through ``SolveReport.converged`` together with the partial
    field.
    """
    if spec.s != 0:
        raise SpecError("solve_dirichlet requires s = 0; use solve_degenerate")
    config = config or SolverConfig.for_dim(spec.dim)
    t0 = time.perf_counter()
    st = stencil or build_stencil(grid, config.stencil_width)
    f = spec.f_values(grid)
    u0 = initial_guess(spec, grid) if initial is None else np.asarray(initial, dtype=float)
    u, ok, iters, res = _solve_rhs(st, f, spec.penalty, config, u0)
    return GridField.from_interior(grid, u), _report(st, u, ok, iters, res, t0)


def eps_floor(spec: ProblemSpec, config: SolverConfig) -> float:
    return config.eps_floor * diameter(spec.domain) ** 2


def solve_degenerate(
    spec: ProblemSpec,
    grid: Grid,
    config: SolverConfig | None = None,
    initial: np.ndarray | None = None,
) -> tuple[GridField, SolveReport]:
    """Relaxed fixed point for det D^2 u = f |u|^s with zero boundary data.

    Each outer step re-solves the nondegenerate problem with right-hand side
    f * max(|u_k|, eps)^s and blends the result with weight ``omega``.
    """
    config = config or SolverConfig.for_dim(spec.dim)
    if spec.s == 0:
        return solve_dirichlet(spec, grid, config, initial)
    t0 = time.perf_counter()
    st = build_stencil(grid, config.stencil_width)
    f = spec.f_values(grid)
    eps = eps_floor(spec, config)
    u0 = initial_guess(spec, grid) if initial is None else np.asarray(initial, dtype=float)
    u, ok, iters, res = _solve_rhs(st, f, spec.penalty, config, u0)
    total = iters
    if not ok:
        return GridField.from_interior(grid, u), _report(st, u, False, total, res, t0, 0, eps)
    base = float(np.abs(u).max())
    k = 0
    converged = False
    while k < config.max_outer_iters:
        k += 1
        rhs = f * np.maximum(np.abs(u), eps) ** spec.s
        w, ok, iters, res = _solve_rhs(st, rhs, spec.penalty, config, u)
        total += iters
        if not ok:
            return GridField.from_interior(grid, u), _report(st, u, False, total, res, t0, k, eps)
        new = (1.0 - config.omega) * u + config.omega * w
        change = float(np.abs(new - u).max())
        u = new
        size = float(np.abs(u).max())
        log.debug("fixed point %d: change %.3e sup|u| %.4g", k, change, size)
        if size > 10.0 * base:
            raise DivergenceError(f"outer iterate grew to {size:.3g} (start {base:.3g})")
        if size < 10.0 * eps:
            raise TrivialBranchError("outer iteration collapsed to the zero solution")
        if change <= 1e-6 * base:
            converged = True
            break
    # residual of the degenerate equation itself; ``res`` stays the residual
    # of the last inner solve, which is what the Newton tolerance controls
    vals = basis_values(st, second_differences(st, u), spec.penalty).min(axis=0)
    rep = _report(st, u, converged, total, res, t0, k, eps)
    rep.equation_residual = float(np.abs(vals - f * np.maximum(np.abs(u), eps) ** spec.s).max())
    return GridField.from_interior(grid, u), rep


def solve_coupled(
    spec: ProblemSpec,
    grid: Grid,
    config: SolverConfig | None = None,
    initial: np.ndarray | None = None,
) -> tuple[GridField, SolveReport]:
    """Monolithic Newton on MA_h[u] - f max(|u|, eps)^s = 0."""
    config = config or SolverConfig.for_dim(spec.dim)
    t0 = time.perf_counter()
    st = build_stencil(grid, config.stencil_width)
    f = spec.f_values(grid)
    eps = eps_floor(spec, config)
    s = spec.s

    def residual(u):
        vals = basis_values(st, second_differences(st, u), spec.penalty).min(axis=0)
        return vals - f * np.maximum(np.abs(u), eps) ** s

    def jacobian(u):
        d2 = second_differences(st, u)
        arg = np.argmin(basis_values(st, d2, spec.penalty), axis=0)
        J = _jacobian(st, d2, arg, spec.penalty)
        a = np.abs(u)
        # d/du of f |u|^s is s f |u|^(s-1) sign(u); constant below the floor
        dterm = np.where(a > eps, s * f * np.maximum(a, eps) ** (s - 1) * np.sign(u), 0.0)
        return (J - sp.diags(dterm)).tocsr()

    if initial is None:
        dirichlet = ProblemSpec(spec.domain, spec.f, spec.lam, spec.Lam)
        u0, _ = solve_dirichlet(dirichlet, grid, config)
        initial = u0.interior_values
    u, ok, iters, res = _newton(st, np.asarray(initial, dtype=float).copy(), residual, jacobian, config, "coupled")
    return GridField.from_interior(grid, u), _report(st, u, ok, iters, res, t0, 0, eps)


def convexity_defect(field: GridField, width: int) -> float:
    """Most negative second difference over all stencil directions (0 if none)."""
    st = build_stencil(field.grid, width)
    return float(min(second_differences(st, field.interior_values).min(), 0.0))
