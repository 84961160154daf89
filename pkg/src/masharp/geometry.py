"""Bounded convex domains and the uniform grids laid over them.

Three kinds of domain are supported: axis-aligned boxes, Euclidean balls and
H-polytopes (finite intersections of half-spaces).  All distance queries are
exact for these kinds, which keeps every distance-weighted estimate free of
geometric error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .errors import GeometryError, OutsideDomainError, ResolutionError, UnboundedDomainError

NORMAL_RTOL = 1e-12
BISECT_RTOL = 1e-12

INTERIOR = 0
EXTERIOR = 1
BOUNDARY_CUT = 2


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """A bounded convex open set in R^n (n = 2 or 3).

    Use the :meth:`box`, :meth:`ball` and :meth:`polytope` constructors rather
    than calling the class directly; they validate the invariants.
    """

    kind: str
    intervals: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None
    _vertices: np.ndarray | None = field(default=None, repr=False)

    # -- constructors -----------------------------------------------------

    @classmethod
    def box(cls, intervals) -> ConvexDomain:
        iv = np.asarray(intervals, dtype=float)
        if iv.ndim != 2 or iv.shape[1] != 2 or iv.shape[0] not in (2, 3):
            raise GeometryError("box intervals must be a list of n pairs, n in {2, 3}")
        if np.any(iv[:, 0] >= iv[:, 1]):
            raise GeometryError("box has empty interior (a_i >= b_i)")
        return cls(kind="box", intervals=iv)

    @classmethod
    def ball(cls, center, radius: float) -> ConvexDomain:
        c = np.asarray(center, dtype=float)
        if c.ndim != 1 or c.size not in (2, 3):
            raise GeometryError("ball center must be a point in R^2 or R^3")
        if not radius > 0:
            raise GeometryError("ball radius must be positive")
        return cls(kind="ball", center=c, radius=float(radius))

    @classmethod
    def polytope(cls, normals, offsets) -> ConvexDomain:
        """Polytope ``{x : normals @ x < offsets}`` with unit outward normals."""
        a = np.asarray(normals, dtype=float)
        b = np.asarray(offsets, dtype=float)
        if a.ndim != 2 or a.shape[1] not in (2, 3) or b.shape != (a.shape[0],):
            raise GeometryError("polytope needs an (m, n) normal array and m offsets")
        norms = np.linalg.norm(a, axis=1)
        if np.any(np.abs(norms - 1.0) > NORMAL_RTOL):
            raise GeometryError("polytope normals must be unit vectors")
        n = a.shape[1]
        # Chebyshev centre: maximise the minimal slack r subject to a x + r <= b.
        res = linprog(
            c=np.r_[np.zeros(n), -1.0],
            A_ub=np.c_[a, np.ones(len(b))],
            b_ub=b,
            bounds=[(None, None)] * n + [(None, 1e6)],
            method="highs",
        )
        if res.status != 0 or res.x[-1] <= 0:
            raise GeometryError("polytope has empty interior")
        if res.x[-1] >= 1e6 * (1 - 1e-9):
            raise UnboundedDomainError("polytope is unbounded")
        for i, sign in itertools.product(range(n), (1.0, -1.0)):
            direction = np.zeros(n)
            direction[i] = -sign
            probe = linprog(c=direction, A_ub=a, b_ub=b, bounds=[(None, None)] * n, method="highs")
            if probe.status == 3:
                raise UnboundedDomainError(f"polytope is unbounded along {'+' if sign > 0 else '-'}e{i + 1}")
        verts = _enumerate_vertices(a, b)
        return cls(kind="polytope", normals=a, offsets=b, _vertices=verts)

    @classmethod
    def from_dict(cls, spec: dict) -> ConvexDomain:
        kind = spec.get("kind")
        if kind == "box":
            return cls.box(spec["intervals"])
        if kind == "ball":
            return cls.ball(spec["center"], spec["radius"])
        if kind == "polytope":
            hs = spec["halfspaces"]
            return cls.polytope([h["normal"] for h in hs], [h["offset"] for h in hs])
        raise GeometryError(f"unknown domain kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "intervals": self.intervals.tolist()}
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        return {
            "kind": "polytope",
            "halfspaces": [
                {"normal": nv.tolist(), "offset": float(o)} for nv, o in zip(self.normals, self.offsets)
            ],
        }

    # -- basic queries ----------------------------------------------------

    @property
    def dim(self) -> int:
        if self.kind == "box":
            return self.intervals.shape[0]
        if self.kind == "ball":
            return self.center.size
        return self.normals.shape[1]

    def bounding_box(self) -> np.ndarray:
        """(n, 2) array of per-axis [min, max]."""
        if self.kind == "box":
            return self.intervals.copy()
        if self.kind == "ball":
            return np.c_[self.center - self.radius, self.center + self.radius]
        return np.c_[self._vertices.min(axis=0), self._vertices.max(axis=0)]

    def bounding_ball(self) -> tuple[np.ndarray, float]:
        """A ball containing the closed domain: (centre, radius)."""
        if self.kind == "ball":
            return self.center.copy(), self.radius
        if self.kind == "box":
            iv = self.intervals
            return iv.mean(axis=1), 0.5 * float(np.linalg.norm(iv[:, 1] - iv[:, 0]))
        c = 0.5 * (self._vertices.min(axis=0) + self._vertices.max(axis=0))
        return c, float(np.max(np.linalg.norm(self._vertices - c, axis=1)))

    def slack(self, points) -> np.ndarray:
        """Signed distance to the boundary, positive inside.

        Exact inside the closed domain.  Outside it returns a negative number
        whose magnitude is the largest constraint violation (the true exterior
        distance for balls, a lower bound for boxes and polytopes).
        """
        x = np.asarray(points, dtype=float)
        if self.kind == "box":
            lo = x - self.intervals[:, 0]
            hi = self.intervals[:, 1] - x
            return np.minimum(lo, hi).min(axis=-1)
        if self.kind == "ball":
            return self.radius - np.linalg.norm(x - self.center, axis=-1)
        return (self.offsets - x @ self.normals.T).min(axis=-1)

    def contains(self, points, closed: bool = False) -> np.ndarray:
        s = self.slack(points)
        return s >= 0 if closed else s > 0

    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(self.intervals[:, 1] - self.intervals[:, 0]))
        if self.kind == "ball":
            n = self.dim
            return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n
        return float(ConvexHull(self._vertices).volume)

    def ray_exit(self, points, direction) -> np.ndarray:
        """Parameter t >= 0 at which ``x + t * direction`` meets the boundary.

        ``points`` is (k, n) inside the closed domain; ``direction`` is any
        nonzero vector (not necessarily unit).
        """
        x = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.asarray(direction, dtype=float)
        if self.kind == "box":
            t = np.full(len(x), np.inf)
            for i in range(self.dim):
                if d[i] > 0:
                    t = np.minimum(t, (self.intervals[i, 1] - x[:, i]) / d[i])
                elif d[i] < 0:
                    t = np.minimum(t, (self.intervals[i, 0] - x[:, i]) / d[i])
            return np.maximum(t, 0.0)
        if self.kind == "ball":
            # |x - c + t d|^2 = r^2, take the positive root
            y = x - self.center
            a = d @ d
            b = y @ d
            c = np.einsum("ij,ij->i", y, y) - self.radius**2
            disc = np.maximum(b * b - a * c, 0.0)
            return np.maximum((-b + np.sqrt(disc)) / a, 0.0)
        nd = self.normals @ d
        slack = self.offsets[None, :] - x @ self.normals.T
        with np.errstate(divide="ignore"):
            t = np.where(nd[None, :] > 0, slack / nd[None, :], np.inf)
        return np.maximum(t.min(axis=1), 0.0)


def _enumerate_vertices(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[1]
    verts = []
    for rows in itertools.combinations(range(len(b)), n):
        sub = a[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b[list(rows)])
        if np.all(a @ v <= b + 1e-9 * (1 + np.abs(b))):
            verts.append(v)
    if not verts:
        raise UnboundedDomainError("polytope has no vertices")
    verts = np.array(verts)
    # merge duplicates produced by degenerate vertices
    keep = []
    for v in verts:
        if not any(np.linalg.norm(v - k) < 1e-10 for k in keep):
            keep.append(v)
    return np.array(keep)


def bisect_exit(domain: ConvexDomain, x, direction, t_max: float) -> float:
    """Exit parameter along a ray by bisection on the membership predicate.

    Generic fallback used to cross-check the closed-form ``ray_exit``; any
    convex domain with a ``contains`` predicate works.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    lo, hi = 0.0, float(t_max)
    if domain.contains(x + hi * d):
        return hi
    while hi - lo > BISECT_RTOL * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if domain.contains(x + mid * d):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dist_to_boundary(domain: ConvexDomain, x) -> float:
    """Euclidean distance from a point of the closed domain to the boundary."""
    s = float(domain.slack(np.asarray(x, dtype=float)))
    if s < 0:
        raise OutsideDomainError(np.asarray(x, dtype=float), -s)
    return s


def diameter(domain: ConvexDomain) -> float:
    if domain.kind == "box":
        return float(np.linalg.norm(domain.intervals[:, 1] - domain.intervals[:, 0]))
    if domain.kind == "ball":
        return 2.0 * domain.radius
    v = domain._vertices
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


@dataclass(eq=False)
class Grid:
    """Uniform Cartesian grid over the bounding box of a domain.

    ``cut`` holds, for every interior node and every axis direction
    (``cut[k, i, 0]`` towards +e_i, ``cut[k, i, 1]`` towards -e_i), the
    fraction theta in (0, 1] of the grid step after which the axis arm leaves
    the domain; theta = 1 when the neighbour is interior or lies on the
    boundary.
    """

    domain: ConvexDomain
    spacing: float
    origin: np.ndarray
    shape: tuple[int, ...]
    label: np.ndarray  # node classification, flattened C order
    cut: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self) -> np.ndarray:
        """(size, n) coordinates of all nodes, C order."""
        axes = [self.origin[i] + self.spacing * np.arange(m) for i, m in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @property
    def interior(self) -> np.ndarray:
        return self.label == INTERIOR

    @property
    def interior_index(self) -> np.ndarray:
        """Flat indices of interior nodes, ascending."""
        return np.flatnonzero(self.label == INTERIOR)

    def axis_values(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.shape[axis])


def build_grid(domain: ConvexDomain, target_nodes_per_axis: int) -> Grid:
    if target_nodes_per_axis < 9:
        raise ResolutionError("target_nodes_per_axis must be at least 9")
    bb = domain.bounding_box()
    extent = bb[:, 1] - bb[:, 0]
    h = float(extent.max()) / (target_nodes_per_axis - 1)
    counts = tuple(int(math.ceil(e / h - 1e-9)) + 1 for e in extent)
    # centre the lattice on the bounding box along shorter axes
    origin = bb[:, 0] - 0.5 * ((np.array(counts) - 1) * h - extent)
    grid = Grid(domain, h, origin, counts, np.empty(0, dtype=np.int8), np.empty((0, len(counts), 2)))
    x = grid.coords()
    inside = domain.contains(x)
    if not inside.any():
        raise ResolutionError("grid has no interior nodes; refine the resolution")
    label = np.where(inside, INTERIOR, EXTERIOR).astype(np.int8)
    mi = inside.reshape(counts)
    near = np.zeros_like(mi)
    for ax in range(len(counts)):
        near |= _shift(mi, ax, 1) | _shift(mi, ax, -1)
    label[(near & ~mi).ravel()] = BOUNDARY_CUT
    idx = np.flatnonzero(inside)
    cut = np.ones((len(idx), len(counts), 2))
    for ax in range(len(counts)):
        for side, sgn in enumerate((1.0, -1.0)):
            d = np.zeros(len(counts))
            d[ax] = sgn * h
            t = domain.ray_exit(x[idx], d)
            cut[:, ax, side] = np.minimum(t, 1.0)
    grid.label = label
    grid.cut = cut
    return grid


def _shift(a: np.ndarray, axis: int, step: int) -> np.ndarray:
    """Value of ``a`` at the neighbour ``step`` along ``axis`` (False off-grid)."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis] = slice(step, None)
        dst[axis] = slice(None, -step)
    else:
        src[axis] = slice(None, step)
        dst[axis] = slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def interior_shrink(domain: ConvexDomain, grid: Grid, h: float) -> np.ndarray:
    """Mask over all grid nodes of interior nodes farther than ``h`` from the boundary."""
    if h < 0:
        raise ValueError("h must be nonnegative")
    mask = grid.interior.copy()
    s = domain.slack(grid.coords()[mask])
    mask[mask] = s > h
    return mask
