"""Power-law exponent fits in log-log coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import FitError

MIN_SAMPLES = 6
MIN_SPREAD = 4.0


@dataclass
class ExponentFit:
    exponent: float
    band: float  # half-width of the 95% confidence interval
    r2: float
    prefactor: float
    n_points: int

    @property
    def interval(self) -> tuple[float, float]:
        return self.exponent - self.band, self.exponent + self.band

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "band": self.band,
            "r2": self.r2,
            "prefactor": self.prefactor,
            "n_points": self.n_points,
        }


def fit_growth_exponent(distances, values, min_samples: int = MIN_SAMPLES, min_spread: float = MIN_SPREAD) -> ExponentFit:
    """Least-squares slope of log(value) against log(distance).

    Raises :class:`FitError` for fewer than ``min_samples`` points, any
    nonpositive input, or a distance range narrower than a factor
    ``min_spread``.
    """
    d = np.asarray(distances, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if d.shape != v.shape:
        raise FitError("distances and values differ in length")
    if len(d) < min_samples:
        raise FitError(f"need at least {min_samples} samples, got {len(d)}")
    if not (np.all(d > 0) and np.all(v > 0)) or not (np.all(np.isfinite(d)) and np.all(np.isfinite(v))):
        raise FitError("distances and values must be finite and positive")
    if d.max() / d.min() < min_spread:
        raise FitError(f"distance spread {d.max() / d.min():.3g} is below {min_spread}")
    x, y = np.log(d), np.log(v)
    res = stats.linregress(x, y)
    dof = len(d) - 2
    band = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else float("inf")
    r2 = float(res.rvalue**2) if np.ptp(y) > 0 else 1.0
    return ExponentFit(float(res.slope), band, r2, float(np.exp(res.intercept)), len(d))
