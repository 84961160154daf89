"""Finite-difference Hessians, gradients and determinant diagnostics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ResolutionError

JACOBI_TOL = 1e-12


@dataclass(eq=False)
class HessianField:
    """Centred-difference derivatives at the eligible nodes of a grid.

    A node is eligible when its whole 3^n difference stencil lies in the
    domain, i.e. dist_to_boundary >= 2 h sqrt(n).  All per-node arrays are
    indexed like ``nodes`` (flat grid indices, ascending).
    """

    grid: object
    nodes: np.ndarray
    dist: np.ndarray
    hess: np.ndarray  # (k, n, n), exactly symmetric
    grad: np.ndarray  # (k, n)
    norm: np.ndarray  # spectral norm
    det: np.ndarray
    min_eig: np.ndarray

    @property
    def diag(self) -> np.ndarray:
        return np.diagonal(self.hess, axis1=1, axis2=2)

    @property
    def coords(self) -> np.ndarray:
        return self.grid.coords()[self.nodes]

    def full(self, values: np.ndarray) -> np.ndarray:
        """Scatter a per-node array onto the grid shape, NaN where ineligible."""
        out = np.full(self.grid.size, np.nan)
        out[self.nodes] = values
        return out.reshape(self.grid.shape)

    def eligible_mask(self) -> np.ndarray:
        m = np.zeros(self.grid.size, dtype=bool)
        m[self.nodes] = True
        return m

    def rows(self) -> tuple[list[str], np.ndarray]:
        """Header and numeric table for the Hessian CSV dump."""
        n = self.grid.dim
        head = [f"x{i + 1}" for i in range(n)] + ["dist"] + [f"D{i + 1}{i + 1}" for i in range(n)]
        head += ["norm", "det"]
        table = np.column_stack([self.coords, self.dist, self.diag, self.norm, self.det])
        return head, table


def _shifted(u: np.ndarray, offset) -> np.ndarray:
    """u(x + offset * h) on the interior block [1:-1]^n of the grid array."""
    sl = tuple(slice(1 + o, u.shape[i] - 1 + o) for i, o in enumerate(offset))
    return u[sl]


def sym_eigvals(hess: np.ndarray) -> np.ndarray:
    """Eigenvalues of stacked symmetric 2x2 or 3x3 matrices, ascending."""
    n = hess.shape[-1]
    if n == 2:
        a, b, c = hess[:, 0, 0], hess[:, 0, 1], hess[:, 1, 1]
        mean = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return np.stack([mean - rad, mean + rad], axis=-1)
    return np.sort(np.diagonal(jacobi_diagonalize(hess), axis1=1, axis2=2), axis=-1)


def jacobi_diagonalize(hess: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 50) -> np.ndarray:
    """Cyclic Jacobi rotations applied to a stack of symmetric matrices.

    Returns the (nearly) diagonal similarity transform; iteration stops once
    every off-diagonal entry is below ``tol`` times the Frobenius norm.
    """
    A = np.array(hess, dtype=float, copy=True)
    n = A.shape[-1]
    scale = np.linalg.norm(A, axis=(1, 2))
    scale[scale == 0] = 1.0
    for _ in range(max_sweeps):
        off = np.sqrt(sum(A[:, p, q] ** 2 for p, q in itertools.combinations(range(n), 2)))
        if np.all(off <= tol * scale):
            break
        for p, q in itertools.combinations(range(n), 2):
            apq = A[:, p, q]
            # entries already below the stopping tolerance are left alone
            active = np.abs(apq) > 1e-3 * tol * scale
            theta = np.where(active, (A[:, q, q] - A[:, p, p]) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta**2 + 1.0))
            t[theta == 0] = 1.0
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- R^T A R with R the (p, q) Givens rotation
            Ap = A[:, :, p].copy()
            Aq = A[:, :, q].copy()
            A[:, :, p] = c[:, None] * Ap - s[:, None] * Aq
            A[:, :, q] = s[:, None] * Ap + c[:, None] * Aq
            Ap = A[:, p, :].copy()
            Aq = A[:, q, :].copy()
            A[:, p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[:, q, :] = s[:, None] * Ap + c[:, None] * Aq
    return A


def hessian_field(u) -> HessianField:
    """Centred second and first differences of a solution field."""
    grid = u.grid
    n = grid.dim
    h = grid.spacing
    arr = u.as_array()
    dist = grid.domain.slack(grid.coords())
    eligible = grid.interior & (dist >= 2.0 * h * np.sqrt(n) * (1 - 1e-12))
    if not eligible.any():
        raise ResolutionError("no node has a full centred stencil inside the domain")
    inner = np.zeros(grid.shape, dtype=bool)
    inner[(slice(1, -1),) * n] = True
    eligible &= inner.ravel()
    block = eligible.reshape(grid.shape)[(slice(1, -1),) * n]
    zero = (0,) * n
    c = _shifted(arr, zero)[block]
    hess = np.empty((len(c), n, n))
    grad = np.empty((len(c), n))
    for i in range(n):
        e = [0] * n
        e[i] = 1
        up = _shifted(arr, e)[block]
        dn = _shifted(arr, [-k for k in e])[block]
        hess[:, i, i] = (up - 2.0 * c + dn) / h**2
        grad[:, i] = (up - dn) / (2.0 * h)
    for i, j in itertools.combinations(range(n), 2):
        pp, pm, mp, mm = ([0] * n for _ in range(4))
        pp[i], pp[j] = 1, 1
        pm[i], pm[j] = 1, -1
        mp[i], mp[j] = -1, 1
        mm[i], mm[j] = -1, -1
        mixed = (
            _shifted(arr, pp)[block] - _shifted(arr, pm)[block] - _shifted(arr, mp)[block] + _shifted(arr, mm)[block]
        ) / (4.0 * h * h)
        hess[:, i, j] = mixed
        hess[:, j, i] = mixed
    eig = sym_eigvals(hess)
    nodes = np.flatnonzero(eligible)
    return HessianField(
        grid=grid,
        nodes=nodes,
        dist=dist[nodes],
        hess=hess,
        grad=grad,
        norm=np.abs(eig).max(axis=1),
        det=np.linalg.det(hess),
        min_eig=eig[:, 0],
    )


@dataclass
class HadamardReport:
    passed: bool
    tol: float
    worst_violation: float
    worst_location: list[float] | None
    det_match_passed: bool
    det_match_threshold: float
    worst_det_residual: float
    worst_det_location: list[float] | None
    det_match_nodes: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def hadamard_report(H: HessianField, f_values, newton_tolerance: float = 1e-8, lam: float = 1.0) -> HadamardReport:
    """Check det H <= prod(H_ii) and |det H - f| / f at every eligible node.

    ``f_values`` is either an array over the eligible nodes or any object with
    an ``evaluate(points)`` method.
    """
    if len(H.nodes) == 0:
        raise ResolutionError("no eligible nodes")
    f = f_values.evaluate(H.coords) if hasattr(f_values, "evaluate") else np.asarray(f_values, dtype=float)
    prod = np.prod(H.diag, axis=1)
    tol = 1e-8 * float(np.abs(prod).max())
    excess = H.det - prod
    k = int(np.argmax(excess))
    coords = H.coords
    far = H.dist >= 4.0 * H.grid.spacing
    rel = np.abs(H.det - f) / f
    thr = 10.0 * newton_tolerance / lam
    if far.any():
        j = int(np.flatnonzero(far)[np.argmax(rel[far])])
        worst_rel, loc = float(rel[j]), coords[j].tolist()
    else:
        worst_rel, loc = 0.0, None
    return HadamardReport(
        passed=bool(np.all(excess <= tol)),
        tol=tol,
        worst_violation=float(excess[k]),
        worst_location=coords[k].tolist(),
        det_match_passed=bool(worst_rel <= thr),
        det_match_threshold=thr,
        worst_det_residual=worst_rel,
        worst_det_location=loc,
        det_match_nodes=int(far.sum()),
    )


@dataclass
class Profile:
    """One grid line parallel to x1 at fixed transverse coordinates."""

    fixed: list[float]  # (x2, ..., xn)
    x1: np.ndarray
    u: np.ndarray
    D1u: np.ndarray
    D11u: np.ndarray
    Dnnu: np.ndarray
    slope_difference: float
    trapezoid_integral: float
    u_left: float
    u_right: float

    @property
    def consistency_gap(self) -> float:
        return abs(self.slope_difference - self.trapezoid_integral)


def directional_profiles(u, H: HessianField, fixed_points) -> list[Profile]:
    """Slices of u and its derivatives along x1 through the given points.

    ``fixed_points`` lists transverse coordinates (x2, ..., xn); each is
    snapped to the nearest grid line.  The slice runs between the images of
    x1 = -1/2 and x1 = +1/2 under the box normalisation to
    (-1, 1)^(n-1) x (0, 2), where the fundamental theorem of calculus
    check D1u(right) - D1u(left) = int D11u is evaluated with the trapezoid
    rule.
    """
    grid = u.grid
    dom = grid.domain
    if dom.kind != "box":
        raise GeometryError("directional profiles need a box domain")
    a, b = dom.intervals[0]
    lo, hi = a + 0.25 * (b - a), b - 0.25 * (b - a)
    h = grid.spacing
    xs = grid.axis_values(0)
    i0 = int(np.argmin(np.abs(xs - lo)))
    i1 = int(np.argmin(np.abs(xs - hi)))
    arr = u.as_array()
    hess = H.hess
    n = grid.dim
    full = {
        "D1u": H.full(H.grad[:, 0]),
        "D11u": H.full(hess[:, 0, 0]),
        "Dnnu": H.full(hess[:, n - 1, n - 1]),
    }
    out = []
    for fp in fixed_points:
        fp = np.atleast_1d(np.asarray(fp, dtype=float))
        idx = [int(np.argmin(np.abs(grid.axis_values(k + 1) - fp[k]))) for k in range(n - 1)]
        sel = (slice(i0, i1 + 1), *idx)
        d11 = full["D11u"][sel]
        d1 = full["D1u"][sel]
        if np.isnan(d11).any():
            raise ResolutionError(f"slice at {fp.tolist()} leaves the eligible region")
        trap = float(h * (d11.sum() - 0.5 * (d11[0] + d11[-1])))
        fixed = [float(grid.axis_values(k + 1)[idx[k]]) for k in range(n - 1)]
        out.append(
            Profile(
                fixed=fixed,
                x1=xs[i0 : i1 + 1].copy(),
                u=arr[sel].copy(),
                D1u=d1.copy(),
                D11u=d11.copy(),
                Dnnu=full["Dnnu"][sel].copy(),
                slope_difference=float(d1[-1] - d1[0]),
                trapezoid_integral=trap,
                u_left=float(arr[sel][0]),
                u_right=float(arr[sel][-1]),
            )
        )
    return out
