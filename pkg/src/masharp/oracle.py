"""Oliker-Prussner reference solver for small planar problems.

The discrete solution is the convex piecewise-linear function that is zero
on a set of boundary nodes and whose subdifferential at every interior node
has area equal to a prescribed mass.  The subdifferential of node i is the
polygon

    {p : p . (x_j - x_i) <= u_j - u_i  for all nodes j != i},

read off the lower convex hull of the lifted points (x_j, u_j) as the hull
of the gradients of the facets around node i.  A direct half-plane
intersection of the constraints above is kept as an independent route.
Masses are f(x_i) times the area of the node's Voronoi cell clipped to the
domain.

The iteration starts from u = 0 (all areas zero, so every node is short of
mass) and lowers one node at a time until its area matches its mass.
Lowering a node only shrinks the subdifferentials of the others, so every
area stays at or below its target and the nodal values decrease
monotonically to the solution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.optimize import brentq
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import ConvergenceError, GeometryError
from .expression import Expression
from .geometry import ConvexDomain

log = logging.getLogger(__name__)

MAX_NODES = 200
MAX_LIFTS = 10**6


def clip_halfplane(poly: np.ndarray, a: np.ndarray, b: float) -> np.ndarray:
    """Intersect a convex polygon (counter-clockwise vertices) with a . p <= b."""
    if len(poly) == 0:
        return poly
    s = poly @ a - b
    inside = s <= 0
    if inside.all():
        return poly
    if not inside.any():
        return poly[:0]
    out = []
    m = len(poly)
    for k in range(m):
        p, q = poly[k], poly[(k + 1) % m]
        sp_, sq = s[k], s[(k + 1) % m]
        if sp_ <= 0:
            out.append(p)
        if (sp_ < 0 < sq) or (sq < 0 < sp_):
            out.append(p + (q - p) * (sp_ / (sp_ - sq)))
    return np.array(out)


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a simple polygon."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def halfplane_polygon(normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Vertices (counter-clockwise) of the bounded set {p : normals @ p <= offsets}.

    Every pairwise line intersection is formed and the feasible ones are
    kept, so the cost is quadratic in the number of constraints but fully
    vectorised.  Returns an empty array when the set is empty or a point.
    """
    a = normals
    i, j = np.triu_indices(len(a), 1)
    det = a[i, 0] * a[j, 1] - a[i, 1] * a[j, 0]
    ok = np.abs(det) > 1e-14 * np.linalg.norm(a[i], axis=1) * np.linalg.norm(a[j], axis=1)
    i, j, det = i[ok], j[ok], det[ok]
    px = (offsets[i] * a[j, 1] - offsets[j] * a[i, 1]) / det
    py = (a[i, 0] * offsets[j] - a[j, 0] * offsets[i]) / det
    pts = np.column_stack([px, py])
    scale = np.abs(offsets).max() + 1e-300
    feas = np.all(pts @ a.T - offsets <= 1e-12 * scale, axis=1)
    pts = pts[feas]
    if len(pts) < 3:
        return pts[:0]
    # several lines through one vertex give repeated intersections
    keep = np.ones(len(pts), dtype=bool)
    tol = 1e-12 * (np.abs(pts).max() + 1e-300)
    for k in range(1, len(pts)):
        keep[k] = not np.any(np.all(np.abs(pts[:k][keep[:k]] - pts[k]) <= tol, axis=1))
    pts = pts[keep]
    if len(pts) < 3:
        return pts[:0]
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    return pts[np.argsort(ang, kind="stable")]


def subdifferential_polygon(points: np.ndarray, values: np.ndarray, i: int, candidates=None) -> np.ndarray:
    """Subdifferential polygon of the lower hull at ``points[i]``.

    ``candidates`` restricts the constraints to a subset of nodes; the
    polygon is then checked against every node and violated constraints are
    added until it is exact.
    """
    others = np.delete(np.arange(len(points)), i)
    dx = points[others] - points[i]
    du = values[others] - values[i]
    if candidates is None:
        active = np.arange(len(others))
    else:
        active = np.flatnonzero(np.isin(others, candidates))
    scale = np.abs(du).max() + 1e-300
    # a box of half-width R keeps the intersection bounded while constraints
    # are still missing; the true cell never reaches it
    R = 4.0 * (scale + 1.0) / np.linalg.norm(dx, axis=1).min()
    box_n = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    while True:
        poly = halfplane_polygon(np.vstack([dx[active], box_n]), np.r_[du[active], np.full(4, R)])
        if len(poly) == 0:
            # a point or empty cell is only exact if no constraint was left out
            if len(active) == len(others):
                return poly
            active = np.arange(len(others))
            continue
        viol = poly @ dx.T - du
        bad = np.setdiff1d(np.flatnonzero((viol > 1e-12 * scale).any(axis=0)), active)
        if len(bad) == 0:
            if np.abs(poly).max() >= R * (1 - 1e-9):
                if len(active) == len(others):
                    R *= 4.0
                active = np.arange(len(others))
                continue
            return poly
        active = np.union1d(active, bad)


def hull_cells(points: np.ndarray, values: np.ndarray, nodes) -> list[np.ndarray]:
    """Subdifferential polygons at ``nodes`` from the lower convex hull.

    The lifted points (x, u) are hulled once; the subdifferential at a hull
    vertex is the convex hull of the gradients of the lower facets that
    contain it.  Nodes lying above the lower hull get an empty cell.
    """
    lifted = np.column_stack([points, values])
    if np.ptp(values) == 0:
        return [np.empty((0, 2)) for _ in nodes]
    hull = ConvexHull(lifted)
    eq = hull.equations
    lower = eq[:, 2] < -1e-12
    grads = -eq[lower, :2] / eq[lower, 2:3]
    simp = hull.simplices[lower]
    out = []
    for i in nodes:
        g = grads[np.any(simp == i, axis=1)]
        out.append(_convex_polygon(g))
    return out


def _convex_polygon(pts: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull of a planar point set; empty if degenerate."""
    if len(pts) < 3:
        return np.empty((0, 2))
    try:
        h = ConvexHull(pts)
    except QhullError:
        return np.empty((0, 2))
    return pts[h.vertices]


def voronoi_masses(domain: ConvexDomain, f: Expression, interior: np.ndarray, boundary: np.ndarray) -> np.ndarray:
    """f(x_i) times the area of each interior node's Voronoi cell inside the domain."""
    region = domain_polygon(domain)
    pts = np.vstack([interior, boundary])
    cells = shapely.voronoi_polygons(shapely.MultiPoint(pts), extend_to=region, ordered=True)
    areas = np.array([shapely.intersection(c, region).area for c in shapely.get_parts(cells)[: len(interior)]])
    return f.evaluate(interior) * areas


def domain_polygon(domain: ConvexDomain, resolution: int = 256):
    """The domain as a shapely polygon (balls are approximated by a fine polygon)."""
    if domain.dim != 2:
        raise GeometryError("the geometric oracle is planar")
    if domain.kind == "ball":
        return shapely.Point(*domain.center).buffer(domain.radius, quad_segs=resolution // 4)
    if domain.kind == "box":
        (a0, b0), (a1, b1) = domain.intervals
        return shapely.box(a0, a1, b0, b1)
    return shapely.MultiPoint(domain._vertices).convex_hull


def boundary_nodes(domain: ConvexDomain, spacing: float) -> np.ndarray:
    """Points on the boundary, about ``spacing`` apart, including all vertices."""
    if domain.dim != 2:
        raise GeometryError("the geometric oracle is planar")
    if domain.kind == "ball":
        m = max(8, int(np.ceil(2 * np.pi * domain.radius / spacing)))
        t = 2 * np.pi * np.arange(m) / m
        return domain.center + domain.radius * np.column_stack([np.cos(t), np.sin(t)])
    ring = np.asarray(domain_polygon(domain).exterior.coords)[:-1]
    out = []
    for p, q in zip(ring, np.roll(ring, -1, axis=0)):
        k = max(1, int(round(np.linalg.norm(q - p) / spacing)))
        out.append(p + np.outer(np.arange(k) / k, q - p))
    return np.vstack(out)


@dataclass
class OracleSolution:
    values: np.ndarray
    masses: np.ndarray
    areas: np.ndarray
    sweeps: int
    lifts: int
    max_defect: float


def oliker_prussner_solve(
    domain: ConvexDomain,
    f,
    nodes,
    boundary=None,
    masses=None,
    tol: float = 1e-10,
    max_lifts: int = MAX_LIFTS,
) -> OracleSolution:
    """Gauss-Seidel lowering iteration for the discrete Monge-Ampere measure.

    ``boundary`` defaults to points sampled along the boundary at the median
    nearest-neighbour spacing of ``nodes``; ``masses`` defaults to
    :func:`voronoi_masses`.  Stops when every |area - mass| <= ``tol``.
    """
    f = f if isinstance(f, Expression) else Expression(str(f))
    x = np.atleast_2d(np.asarray(nodes, dtype=float))
    if x.shape[1] != 2 or domain.dim != 2:
        raise GeometryError("the geometric oracle is planar")
    if len(x) > MAX_NODES:
        raise ValueError(f"at most {MAX_NODES} interior nodes")
    if not np.all(domain.contains(x)):
        raise GeometryError("oracle nodes must lie inside the domain")
    if boundary is None:
        if len(x) > 1:
            dd, _ = cKDTree(x).query(x, k=2)
            spacing = float(np.median(dd[:, 1]))
        else:
            spacing = float(domain.slack(x)[0])
        boundary = boundary_nodes(domain, spacing)
    boundary = np.atleast_2d(np.asarray(boundary, dtype=float))
    m = voronoi_masses(domain, f, x, boundary) if masses is None else np.asarray(masses, dtype=float)
    pts = np.vstack([x, boundary])
    vals = np.zeros(len(pts))

    def cell(i):
        poly = hull_cells(pts, vals, [i])[0]
        return poly, polygon_area(poly)

    last_step = np.full(len(x), np.nan)

    def lower(i):
        """Lower node i until its cell area equals m[i].

        The depth is bracketed by doubling and then located with Brent's
        method on sqrt(area), which is close to linear in the depth.
        """
        base = vals[i]
        target = np.sqrt(m[i])

        def g(t):
            vals[i] = base - t
            return np.sqrt(cell(i)[1]) - target

        lo = 0.0
        hi = last_step[i] if np.isfinite(last_step[i]) else np.sqrt(m[i]) * spacing0
        while g(hi) < 0:
            lo, hi = hi, 2.0 * hi
        t = brentq(g, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps)
        vals[i] = base - t
        last_step[i] = max(t, 1e-300)

    dd, _ = cKDTree(pts).query(x, k=2)
    spacing0 = float(dd[:, 1].min())
    lifts = 0
    sweeps = 0

    def all_areas():
        return np.array([polygon_area(c) for c in hull_cells(pts, vals, range(len(x)))])

    areas = all_areas()
    while np.abs(areas - m).max() > tol:
        sweeps += 1
        for i in range(len(x)):
            a_i = cell(i)[1]
            if m[i] - a_i <= tol:
                continue
            lower(i)
            lifts += 1
            if lifts > max_lifts:
                raise ConvergenceError(f"Oliker-Prussner iteration exceeded {max_lifts} lifts")
        areas = all_areas()
        log.debug("sweep %d: max mass defect %.3e", sweeps, np.abs(areas - m).max())
    return OracleSolution(vals[: len(x)].copy(), m, areas, sweeps, lifts, float(np.abs(areas - m).max()))


def oliker_prussner_oracle(domain: ConvexDomain, f, nodes, **kwargs) -> np.ndarray:
    """Nodal values of the Oliker-Prussner solution at ``nodes``."""
    return oliker_prussner_solve(domain, f, nodes, **kwargs).values
