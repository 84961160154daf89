"""Wide-stencil monotone discretisation of det D^2 u.

At an interior node the discrete operator is the minimum, over orthogonal
bases of primitive lattice directions, of

    prod_i max(D_{v_i} u, 0) + penalty * sum_i min(D_{v_i} u, 0)

where ``D_v u`` is the three-point second difference along ``v``.  Arms that
leave the domain are shortened to the boundary crossing, where the Dirichlet
value 0 is used.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geometry import INTERIOR, Grid


def lattice_directions(n: int, width: int) -> np.ndarray:
    """Primitive integer vectors with entries in [-width, width], one per line.

    Each line is represented by the vector whose first nonzero entry is
    positive; the result is sorted lexicographically.
    """
    out = []
    for v in itertools.product(range(-width, width + 1), repeat=n):
        if not any(v):
            continue
        if math.gcd(*v) != 1:
            continue
        first = next(c for c in v if c != 0)
        if first > 0:
            out.append(v)
    return np.array(sorted(out), dtype=int)


def orthogonal_bases(directions: np.ndarray) -> list[tuple[int, ...]]:
    """All spanning, mutually orthogonal n-tuples of the given directions.

    Returned as sorted index tuples, ordered lexicographically by their
    direction vectors so that ``argmin`` ties resolve to the smallest basis.
    """
    n = directions.shape[1]
    gram = directions @ directions.T
    bases = []
    for combo in itertools.combinations(range(len(directions)), n):
        if all(gram[i, j] == 0 for i, j in itertools.combinations(combo, 2)):
            bases.append(combo)
    bases.sort(key=lambda c: tuple(tuple(directions[i]) for i in c))
    return bases


@dataclass(eq=False)
class Stencil:
    """Per-grid neighbour tables for every stencil direction.

    ``nbr[s, d, k]`` is the interior index of the neighbour of interior node
    ``k`` along ``(+1, -1)[s] * directions[d]``, or -1 if that arm is cut by
    the boundary; ``arm[s, d, k]`` is the physical arm length.
    """

    grid: Grid
    width: int
    directions: np.ndarray
    bases: np.ndarray
    nbr: np.ndarray
    arm: np.ndarray

    @property
    def n_interior(self) -> int:
        return self.nbr.shape[2]


def build_stencil(grid: Grid, width: int) -> Stencil:
    if width not in (1, 2, 3):
        raise ValueError("stencil_width must be 1, 2 or 3")
    n = grid.dim
    dirs = lattice_directions(n, width)
    bases = np.array(orthogonal_bases(dirs), dtype=int)
    # directions that belong to no orthogonal basis never enter the operator
    used = np.unique(bases)
    remap = np.full(len(dirs), -1)
    remap[used] = np.arange(len(used))
    dirs, bases = dirs[used], remap[bases]
    idx = grid.interior_index
    lookup = np.full(grid.size, -1, dtype=np.int64)
    lookup[idx] = np.arange(len(idx))
    multi = np.stack(np.unravel_index(idx, grid.shape), axis=-1)
    x = grid.coords()[idx]
    shape = np.array(grid.shape)
    h = grid.spacing
    nbr = np.full((2, len(dirs), len(idx)), -1, dtype=np.int64)
    arm = np.empty((2, len(dirs), len(idx)))
    for d, v in enumerate(dirs):
        step = np.linalg.norm(v) * h
        for s, sgn in enumerate((1, -1)):
            target = multi + sgn * v
            in_grid = np.all((target >= 0) & (target < shape), axis=1)
            flat = np.full(len(idx), -1, dtype=np.int64)
            flat[in_grid] = np.ravel_multi_index(tuple(target[in_grid].T), grid.shape)
            ok = in_grid.copy()
            ok[in_grid] = grid.label[flat[in_grid]] == INTERIOR
            nbr[s, d, ok] = lookup[flat[ok]]
            arm[s, d, :] = step
            cut = ~ok
            if cut.any():
                t = grid.domain.ray_exit(x[cut], sgn * v * h)
                if np.any(t <= 0):
                    raise GeometryError("stencil arm has no boundary crossing inside the domain")
                arm[s, d, cut] = np.minimum(t, 1.0) * step
    return Stencil(grid, width, dirs, bases, nbr, arm)


def second_differences(st: Stencil, u: np.ndarray) -> np.ndarray:
    """(n_dirs, n_interior) array of unequal-arm second differences of ``u``.

    ``u`` holds values at interior nodes only; cut arms see the value 0.
    """
    up = np.where(st.nbr[0] >= 0, u[st.nbr[0]], 0.0)
    um = np.where(st.nbr[1] >= 0, u[st.nbr[1]], 0.0)
    ap, am = st.arm[0], st.arm[1]
    return 2.0 / (ap + am) * ((up - u) / ap + (um - u) / am)


def basis_values(st: Stencil, d2: np.ndarray, penalty: float) -> np.ndarray:
    """(n_bases, n_interior) values of the penalised product for every basis."""
    sel = d2[st.bases]  # (B, n, N)
    return np.prod(np.maximum(sel, 0.0), axis=1) + penalty * np.minimum(sel, 0.0).sum(axis=1)


def ma_operator(st: Stencil, u: np.ndarray, penalty: float) -> tuple[np.ndarray, np.ndarray]:
    """Discrete Monge-Ampere operator at every interior node.

    Returns the values and the index of the minimising basis (first minimum,
    i.e. the lexicographically smallest basis on ties).
    """
    vals = basis_values(st, second_differences(st, u), penalty)
    arg = np.argmin(vals, axis=0)
    return vals[arg, np.arange(vals.shape[1])], arg


def discrete_ma_operator(u, node: int, stencil_width: int = 2, penalty: float = 1.0) -> float:
    """MA_h[u] at a single interior node.

    ``u`` is a :class:`~masharp.solver.GridField`; ``node`` is a flat grid
    index.  ``penalty`` should be Lambda + 1 for a problem with f <= Lambda.
    """
    grid = u.grid
    if grid.label[node] != INTERIOR:
        raise ValueError("node is not interior")
    st = build_stencil(grid, stencil_width)
    k = int(np.searchsorted(grid.interior_index, node))
    vals, _ = ma_operator(st, u.values[grid.interior_index], penalty)
    return float(vals[k])
