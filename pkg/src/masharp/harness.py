"""Quantitative boundary estimates measured on computed solutions.

Every suite is a pure function of a solution field ``u`` (a
:class:`~masharp.solver.GridField`) and its :class:`~masharp.hessian.HessianField`.
Constants that only exist abstractly (M1, C0, C1, ...) are measured from the
field itself; verdicts compare measured quantities with either exact
inequalities or with caller-supplied acceptance bands.

Box domains are handled in the normalised frame (-1, 1)^(n-1) x (0, 2) with
the flat face {x_n = 0} at the bottom: coordinates are mapped affinely and
second derivatives rescaled accordingly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import FitError, GeometryError, ResolutionError
from .fitting import ExponentFit, fit_growth_exponent
from .geometry import diameter, interior_shrink
from .hessian import HessianField, directional_profiles, sym_eigvals

BETA_CONVERGENT = 0.05
BETA_DIVERGENT = 0.2
FIT_WINDOW = (4, 16)  # fit samples between 4 and 16 grid spacings from the boundary


def slicing_fraction_a(n: int) -> float:
    """a = (1/(n-1)) (1/2 + n - 2): 1/2 in 2D, 3/4 in 3D."""
    return (0.5 + n - 2) / (n - 1)


def holder_exponent(n: int, gamma: float) -> float:
    """Boundary Holder exponent: 2/(1+gamma) in 2D, 2/n otherwise."""
    return 2.0 / (1.0 + gamma) if n == 2 else 2.0 / n


@dataclass
class Check:
    """Outcome of one verdict: ``pass``, ``fail`` or ``inconclusive``."""

    status: str
    value: object = None
    band: object = None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None and v != ""}


def band_check(value: float, band) -> Check:
    lo, hi = band
    return Check("pass" if lo < value < hi else "fail", float(value), [float(lo), float(hi)])


def _fit_dict(fit: ExponentFit | None) -> dict | None:
    return None if fit is None else fit.to_dict()


# -- measured constants ----------------------------------------------------


def measured_constants(u, gamma: float = 1.1) -> dict:
    """M1 = ||u||_inf, M2 = |Omega|, plus the closed-form a and alpha."""
    grid = u.grid
    n = grid.dim
    a = slicing_fraction_a(n)
    assert a == (0.5 if n == 2 else 0.75)
    return {
        "n": n,
        "M1": float(np.abs(u.values).max()),
        "M2": float(grid.domain.volume()),
        "diam": float(diameter(grid.domain)),
        "a": a,
        "gamma": float(gamma),
        "alpha": holder_exponent(n, gamma),
    }


# -- box normalisation -----------------------------------------------------


@dataclass
class BoxFrame:
    """Affine map of a box onto (-1, 1)^(n-1) x (0, 2)."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def of(cls, domain) -> BoxFrame:
        if domain.kind != "box":
            raise GeometryError("this check needs a box domain")
        return cls(domain.intervals[:, 0].copy(), domain.intervals[:, 1].copy())

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        y = (x - self.lower) / self.half_width
        y[..., :-1] -= 1.0
        return y

    def hessian(self, hess: np.ndarray) -> np.ndarray:
        s = self.half_width
        return hess * np.outer(s, s)

    def lam(self, lam: float) -> float:
        """Lower bound of f in the normalised frame (det scales by prod s_i^2)."""
        return lam * float(np.prod(self.half_width**2))


def _layer_samples(u, H: HessianField, window=FIT_WINDOW) -> dict:
    """Per grid layer above the flat face, sups over the mid cross-section Q_n.

    Layer k sits k grid spacings above the face x_n = a_n; Q_n is
    |x_i| <= 1/2 in the normalised frame.
    """
    grid = u.grid
    frame = BoxFrame.of(grid.domain)
    h = grid.spacing
    y = frame.to_unit(grid.coords())
    yh = frame.to_unit(H.coords)
    hess = frame.hessian(H.hess)
    norm = np.abs(sym_eigvals(hess)).max(axis=1)
    n = grid.dim
    rows = []
    base = grid.origin[-1]
    for k in range(window[0], window[1] + 1):
        xn_phys = base + k * h
        if xn_phys - frame.lower[-1] <= 0:
            continue
        height = float((xn_phys - frame.lower[-1]) / frame.half_width[-1])
        tol = 1e-9 * h / frame.half_width[-1]
        q = np.all(np.abs(y[:, :-1]) <= 0.5 + 1e-12, axis=1) & (np.abs(y[:, -1] - height) <= tol)
        qh = np.all(np.abs(yh[:, :-1]) <= 0.5 + 1e-12, axis=1) & (np.abs(yh[:, -1] - height) <= tol)
        if not q.any() or not qh.any():
            continue
        rows.append(
            (
                height,
                float(np.abs(u.values[q]).max()),
                float(norm[qh].max()),
                float(hess[qh, n - 1, n - 1].max()),
            )
        )
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return {"height": arr[:, 0], "u": arr[:, 1], "hess_norm": arr[:, 2], "dnn": arr[:, 3]}


def _try_fit(d, v) -> ExponentFit:
    try:
        return fit_growth_exponent(d, v)
    except FitError as exc:
        raise ResolutionError(f"insufficient distance bands: {exc}") from None


# -- growth ----------------------------------------------------------------


def growth_suite(u, H: HessianField, bands: dict | None = None, window=FIT_WINDOW, gamma: float = 1.1) -> dict:
    """Boundary growth of |u|, |Du| and ||D^2 u||.

    Produces a dyadic band table (sups over dist in [h, 2h)), exponent fits
    over distance shells one grid spacing wide inside ``window`` (in grid
    spacings), the pointwise lower sandwich |u| >= dist/diam ||u|| and
    gradient bound |Du| <= |u|/dist, and on boxes the flat-face fits.

    ``bands`` maps fit names (``u_exponent``, ``grad_exponent``,
    ``hessian_exponent``, ``flat_u_exponent``, ``flat_hessian_exponent``)
    to open acceptance intervals.
    """
    grid = u.grid
    dom = grid.domain
    h = grid.spacing
    consts = measured_constants(u, gamma)
    M1, diam, alpha = consts["M1"], consts["diam"], consts["alpha"]
    idx = grid.interior_index
    dist = dom.slack(grid.coords()[idx])
    absu = np.abs(u.values[idx])
    ue = np.abs(u.values[H.nodes])
    gnorm = np.linalg.norm(H.grad, axis=1)

    # dyadic band table
    table = []
    k = 0
    top = float(dist.max())
    while True:
        lo = 2.0**-k
        k += 1
        if lo >= top:
            continue
        if lo < 4.0 * h:
            break
        sel = (dist >= lo) & (dist < 2 * lo)
        selh = (H.dist >= lo) & (H.dist < 2 * lo)
        if not sel.any() or not selh.any():
            continue
        table.append([lo, float(absu[sel].max()), float(gnorm[selh].max()), float(H.norm[selh].max())])

    # shells of width h inside the fit window
    shells = {"u": ([], []), "grad": ([], []), "hess": ([], [])}
    for j in range(window[0], window[1] + 1):
        lo, hi = j * h, (j + 1) * h
        sel = np.flatnonzero((dist >= lo) & (dist < hi))
        selh = np.flatnonzero((H.dist >= lo) & (H.dist < hi))
        if len(sel):
            m = sel[np.argmax(absu[sel])]
            shells["u"][0].append(dist[m])
            shells["u"][1].append(absu[m])
        if len(selh):
            for key, vals in (("grad", gnorm), ("hess", H.norm)):
                m = selh[np.argmax(vals[selh])]
                shells[key][0].append(H.dist[m])
                shells[key][1].append(vals[m])
    fits = {
        "u_exponent": _try_fit(*shells["u"]),
        "grad_exponent": _try_fit(*shells["grad"]),
        "hessian_exponent": _try_fit(*shells["hess"]),
    }
    layers = None
    if dom.kind == "box":
        layers = _layer_samples(u, H, window)
        fits["flat_u_exponent"] = _try_fit(layers["height"], layers["u"])
        fits["flat_hessian_exponent"] = _try_fit(layers["height"], layers["hess_norm"])

    checks = {}
    sandwich = absu * diam / (dist * M1)
    checks["lower_sandwich"] = Check(
        "pass" if sandwich.min() >= 1.0 - 1e-8 else "fail",
        float(sandwich.min()),
        note="min |u| diam / (dist ||u||), must be >= 1",
    )
    gb = gnorm * H.dist / ue
    checks["gradient_bound"] = Check(
        "pass" if gb.max() <= 1.0 + 1e-8 else "fail",
        float(gb.max()),
        note="max |Du| dist / |u|, must be <= 1",
    )
    for name, band in (bands or {}).items():
        if name not in fits:
            raise KeyError(f"unknown growth fit {name!r}")
        checks[name] = band_check(fits[name].exponent, band)
    holder = float((absu / dist**alpha).max())
    return {
        "constants": consts,
        "holder_constant": holder,
        "band_table": table,
        "fits": {k: v.to_dict() for k, v in fits.items()},
        "layers": None if layers is None else {k: v.tolist() for k, v in layers.items()},
        "checks": {k: v.to_dict() for k, v in checks.items()},
        "passed": all(c.passed for c in checks.values()),
    }


# -- Pogorelov -------------------------------------------------------------


def default_pogorelov_levels(u, levels: int = 5) -> list[float]:
    """Dyadic levels 0.4 ||u||, 0.2 ||u||, ... (``levels`` of them)."""
    M1 = float(np.abs(u.values).max())
    return [0.4 * M1 * 2.0**-k for k in range(levels)]


def pogorelov_suite(u, H: HessianField, hs=None, ratio_band: float = 10.0) -> dict:
    """Sublevel-set Pogorelov products and the sublevel/shrink inclusion.

    For each level h: A_h = {u < -h}, P(h) = sup_{A_h} |u + h| ||D^2 u||,
    G(h) = 1 + sup_{A_h} |Du|^2 and R(h) = P/G over eligible nodes, plus the
    check that every node with dist > diam h / M1 lies in A_h.
    """
    grid = u.grid
    M1 = float(np.abs(u.values).max())
    diam = float(diameter(grid.domain))
    hs = sorted(default_pogorelov_levels(u) if hs is None else [float(v) for v in hs])
    lo_ok = 4.0 * grid.spacing * M1 / diam
    for h in hs:
        if not lo_ok < h < M1 / 2:
            raise ResolutionError(f"level h = {h:.4g} outside ({lo_ok:.4g}, {M1 / 2:.4g})")
    ue = u.values[H.nodes]
    idx = grid.interior_index
    uin = u.values[idx]
    dist = grid.domain.slack(grid.coords()[idx])
    gsq = np.sum(H.grad**2, axis=1)
    rows = []
    masks = []
    for h in hs:
        a_h = ue < -h
        if not a_h.any():
            raise ResolutionError(f"sublevel set A_h is empty at h = {h:.4g}")
        P = float((np.abs(ue[a_h] + h) * H.norm[a_h]).max())
        G = 1.0 + float(gsq[a_h].max())
        shrink = dist > diam * h / M1
        incl = bool(np.all(uin[shrink] < -h))
        masks.append((uin < -h, shrink))
        rows.append({"h": h, "P": P, "G": G, "R": P / G, "inclusion": incl, "nodes": int(a_h.sum())})
    nested = all(
        np.all(masks[i + 1][0] <= masks[i][0]) and np.all(masks[i + 1][1] <= masks[i][1]) for i in range(len(masks) - 1)
    )
    R = np.array([r["R"] for r in rows])
    spread = float(R.max() / R.min())
    checks = {
        "ratio_spread": Check("pass" if spread <= ratio_band else "fail", spread, ratio_band),
        "inclusion": Check("pass" if all(r["inclusion"] for r in rows) else "fail"),
        "nested": Check("pass" if nested else "fail"),
    }
    return {
        "M1": M1,
        "table": rows,
        "checks": {k: v.to_dict() for k, v in checks.items()},
        "passed": all(c.passed for c in checks.values()),
    }


# -- integrability ---------------------------------------------------------


def default_integrability_levels(grid) -> list[float]:
    """Dyadic h from a quarter of the inradius down to the last level >= 4 h_grid."""
    top = 0.25 * float(grid.domain.slack(grid.coords()[grid.interior_index]).max())
    out = []
    h = top
    while h >= 4.0 * grid.spacing * (1 - 1e-12):
        out.append(h)
        h /= 2.0
    return out


def integrability_sweep(
    H: HessianField,
    deltas,
    hs=None,
    beta_threshold: float = BETA_CONVERGENT,
    beta_divergent: float = BETA_DIVERGENT,
) -> dict:
    """Tail behaviour of int_{Omega_h} ||D^2 u||^delta as h -> 0.

    I(delta, h) is the grid quadrature over eligible nodes with dist > h.
    The divergence rate beta(delta) is the slope of log J against log(1/h)
    for the dyadic increments J(delta, h) = I(delta, h) - I(delta, 2h),
    one per level in ``hs``: a
    power tail dist^-p gives J ~ h^(1 - delta p), so beta < 0 for a
    convergent integral and beta > 0 for a divergent one.  delta* is where
    beta crosses ``beta_threshold`` (linear interpolation in delta).
    """
    grid = H.grid
    hs = sorted(default_integrability_levels(grid) if hs is None else [float(v) for v in hs], reverse=True)
    if len(hs) < 4:
        raise ResolutionError(f"need at least 4 dyadic levels, got {len(hs)}")
    if min(hs) < 4.0 * grid.spacing * (1 - 1e-12):
        raise ResolutionError("integrability levels must stay >= 4 grid spacings")
    ratios = np.array(hs[:-1]) / np.array(hs[1:])
    if not np.allclose(ratios, 2.0):
        raise ValueError("integrability levels must be dyadic")
    deltas = [float(d) for d in deltas]
    vol = grid.spacing**grid.dim
    levels = [2.0 * hs[0]] + hs
    I = np.array([[vol * float(np.sum(H.norm[H.dist > h] ** d)) for h in levels] for d in deltas])
    J = np.diff(I, axis=1)  # J[:, k] = I(h_k) - I(2 h_k)
    x = np.log(1.0 / np.array(hs))
    beta, band = [], []
    for row in J:
        if np.any(row <= 0):
            raise ResolutionError("an integrability increment is not positive")
        res = stats.linregress(x, np.log(row))
        beta.append(float(res.slope))
        band.append(float(stats.t.ppf(0.975, len(x) - 2) * res.stderr) if len(x) > 2 else float("inf"))
    beta = np.array(beta)
    band = np.array(band)

    def crossing(b):
        g = b - beta_threshold
        for i in range(len(g) - 1):
            if g[i] < 0 <= g[i + 1]:
                return deltas[i] + (deltas[i + 1] - deltas[i]) * (-g[i]) / (g[i + 1] - g[i])
        return None

    classes = [
        "convergent" if b < beta_threshold else "divergent" if b > beta_divergent else "inconclusive" for b in beta
    ]
    star = crossing(beta)
    lo_star, hi_star = crossing(beta + band), crossing(beta - band)
    return {
        "h": hs,
        "delta": deltas,
        "I": I[:, 1:].tolist(),
        "J": J.tolist(),
        "beta": beta.tolist(),
        "beta_band": band.tolist(),
        "class": classes,
        "delta_star": star,
        "delta_star_band": [lo_star, hi_star],
        "beta_threshold": beta_threshold,
        "beta_divergent": beta_divergent,
        "monotone": bool(np.all(np.diff(beta) >= -(band[1:] + band[:-1]))),
    }


def integrability_checks(result: dict, delta_star_band=None, expect=None) -> dict:
    """Verdicts on a sweep: delta* inside a band and expected classes per delta."""
    checks = {}
    if delta_star_band is not None:
        ds = result["delta_star"]
        checks["delta_star"] = Check("inconclusive", None, list(delta_star_band), "no crossing") if ds is None else band_check(ds, delta_star_band)
    for d, want in (expect or {}).items():
        i = result["delta"].index(float(d))
        got = result["class"][i]
        checks[f"class_{d}"] = Check("pass" if got == want else "fail", got, want, f"beta = {result['beta'][i]:.4g}")
    return checks


# -- slicing ---------------------------------------------------------------


@dataclass
class SlicingReport:
    x_n: float
    alpha: float
    threshold: float
    fraction: float
    nodes: int
    min_dnn: float | None
    median_dnn: float | None
    lower_bound: float
    bound_holds: bool
    hadamard_consistent: bool
    slope_difference: float | None = None
    slope_bound: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _height_factor(n: int, x: float) -> float:
    """x |log x| in 2D, x^(2/n) otherwise."""
    return x * abs(np.log(x)) if n == 2 else x ** (2.0 / n)


def slicing_suite(u, H: HessianField, heights, lam: float) -> dict:
    """Slicing sets E_{x_n} on horizontal layers of a box.

    C0 is the sup over the sampled heights and the mid cross-section of
    |u| / (x_n |log x_n|) in 2D or |u| / x_n^(2/n) in 3D; C1 = 4 C0.  E_{x_n}
    holds the Q_n nodes whose tangential D_ii u all stay below
    2 C1 x_2 |log x_2| (2D) or C1 x_n^(2/n) / (1 - a) (3D); on E the
    Hadamard inequality forces D_nn u >= lambda / prod_{i<n} D_ii u, which is
    compared against the closed-form lower bound.
    """
    grid = u.grid
    n = grid.dim
    frame = BoxFrame.of(grid.domain)
    lam_n = frame.lam(lam)
    h = grid.spacing
    y = frame.to_unit(grid.coords())
    yh = frame.to_unit(H.coords)
    hess = frame.hessian(H.hess)
    det = np.linalg.det(hess)
    a = slicing_fraction_a(n)
    alpha = 2.0 / n
    step = h / frame.half_width[-1]
    layers = []
    for x in heights:
        x = float(x)
        if not 4 * step < x < 0.5:
            raise ResolutionError(f"height {x} outside (4 h_grid, 1/2)")
        k = int(round(x / step))
        xs = k * step
        tol = 1e-9 * step
        q = np.all(np.abs(y[:, :-1]) <= 0.5 + 1e-12, axis=1) & (np.abs(y[:, -1] - xs) <= tol)
        qh = np.all(np.abs(yh[:, :-1]) <= 0.5 + 1e-12, axis=1) & (np.abs(yh[:, -1] - xs) <= tol)
        if not qh.any():
            raise ResolutionError(f"no eligible Hessian nodes on the slice x_n = {xs:.4g}")
        if qh.sum() != q.sum():
            raise ResolutionError(f"slice x_n = {xs:.4g} is not fully resolved")
        layers.append((x, xs, q, np.flatnonzero(qh)))
    C0 = max(float(np.abs(u.values[q]).max()) / _height_factor(n, xs) for _, xs, q, _ in layers)
    C1 = 4.0 * C0
    reports = []
    for _, xs, _, nodes in layers:
        if n == 2:
            thr = 2.0 * C1 * xs * abs(np.log(xs))
            bound = lam_n / thr
        else:
            thr = C1 * xs**alpha / (1.0 - a)
            bound = lam_n * (1.0 - a) ** (n - 1) * C1 ** (1 - n) * xs ** (2.0 / n - 2.0)
        tang = hess[nodes][:, np.arange(n - 1), np.arange(n - 1)]
        in_e = np.all(tang < thr, axis=1)
        e = nodes[in_e]
        dnn = hess[e, n - 1, n - 1]
        prod_all = np.prod(np.diagonal(hess[e], axis1=1, axis2=2), axis=1)
        scale = np.maximum(np.abs(prod_all), 1e-300)
        consistent = bool(np.all(det[e] <= prod_all + 1e-8 * scale))
        reports.append(
            SlicingReport(
                x_n=float(xs),
                alpha=alpha,
                threshold=float(thr),
                fraction=float(in_e.mean()),
                nodes=int(len(nodes)),
                min_dnn=float(dnn.min()) if len(e) else None,
                median_dnn=float(np.median(dnn)) if len(e) else None,
                lower_bound=float(bound),
                bound_holds=bool(len(e) == 0 or dnn.min() >= bound),
                hadamard_consistent=consistent,
            )
        )
    # D1u(1/2) - D1u(-1/2) against C1 * height factor along the central line
    for rep in reports:
        fixed = np.zeros(n - 1)
        fixed[-1] = frame.lower[-1] + rep.x_n * frame.half_width[-1]
        fixed[:-1] = 0.5 * (frame.lower[1:-1] + frame.upper[1:-1]) if n == 3 else fixed[:-1]
        try:
            prof = directional_profiles(u, H, [fixed])[0]
        except ResolutionError:
            continue
        rep.slope_difference = prof.slope_difference * frame.half_width[0]
        rep.slope_bound = C1 * _height_factor(n, rep.x_n)
    return {
        "C0": C0,
        "C1": C1,
        "a": a,
        "lambda_normalised": lam_n,
        "reports": [r.to_dict() for r in reports],
    }


def slicing_checks(result: dict, min_fraction: float = 0.5) -> dict:
    reps = result["reports"]
    fr = [r["fraction"] for r in reps]
    checks = {
        "fraction": Check("pass" if min(fr) >= min_fraction else "fail", float(min(fr)), min_fraction),
        "dnn_bound": Check("pass" if all(r["bound_holds"] for r in reps) else "fail"),
        "hadamard": Check("pass" if all(r["hadamard_consistent"] for r in reps) else "fail"),
    }
    sb = [(r["slope_difference"], r["slope_bound"]) for r in reps if r["slope_difference"] is not None]
    if sb:
        checks["slope_bound"] = Check("pass" if all(d <= b for d, b in sb) else "fail", [list(p) for p in sb])
    return checks


# -- degenerate ------------------------------------------------------------


def degenerate_targets(n: int, s: float, mu1=None, mu2=None) -> dict:
    """Predicted flat-face exponents for det D^2 u = f |u|^s."""
    out = {"non_integrability": (n - s) / (2.0 * (n - s) - 2.0)}
    if s < 0:
        out["u"] = 2.0 / (n - s)
        out["dnn"] = (2.0 - 2.0 * (n - s)) / (n - s)
    elif s > 0:
        out["u_bracket"] = [mu1, mu2]
        out["dnn"] = s * mu2 - (n - 1) * mu1
    return out


def degenerate_exponent_suite(
    u, H: HessianField, s: float, mu1=None, mu2=None, bands: dict | None = None, window=FIT_WINDOW, gamma: float = 1.1
) -> dict:
    """Flat-face exponents of |u| and max_{x'} D_nn u for the degenerate equation.

    With s = 0 this is :func:`growth_suite`.  ``bands`` may hold
    ``u_exponent`` and ``dnn_exponent`` acceptance intervals; for s > 0 the
    |u| exponent is also checked against mu1 < fit < mu2.
    """
    if s == 0:
        return growth_suite(u, H, bands=bands, window=window, gamma=gamma)
    n = u.grid.dim
    layers = _layer_samples(u, H, window)
    fu = _try_fit(layers["height"], layers["u"])
    fd = _try_fit(layers["height"], layers["dnn"])
    checks = {}
    for name, fit in (("u_exponent", fu), ("dnn_exponent", fd)):
        if bands and name in bands:
            checks[name] = band_check(fit.exponent, bands[name])
    if s > 0:
        checks["u_bracket"] = band_check(fu.exponent, (mu1, mu2))
    return {
        "s": s,
        "targets": degenerate_targets(n, s, mu1, mu2),
        "fits": {"u_exponent": fu.to_dict(), "dnn_exponent": fd.to_dict()},
        "layers": {k: v.tolist() for k, v in layers.items()},
        "checks": {k: v.to_dict() for k, v in checks.items()},
        "passed": all(c.passed for c in checks.values()),
    }


def nested_families(u, hs) -> bool:
    """A_h and Omega_h shrink as h grows."""
    grid = u.grid
    hs = sorted(hs)
    uin = u.values[grid.interior_index]
    prev_a = prev_o = None
    for h in hs:
        a = uin < -h
        o = interior_shrink(grid.domain, grid, h)[grid.interior_index]
        if prev_a is not None and (np.any(a & ~prev_a) or np.any(o & ~prev_o)):
            return False
        prev_a, prev_o = a, o
    return True
