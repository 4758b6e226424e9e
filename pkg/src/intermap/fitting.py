"""Small regression helpers shared by the decay, density and partition fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PowerLawFit", "fit_power_law", "fit_geometric", "loglog_slope"]


@dataclass(frozen=True)
class PowerLawFit:
    """y ~ amplitude * x^exponent, least squares in log-log."""

    exponent: float
    log_amplitude: float
    residual: float
    n_points: int

    def tail_sum(self, start: float) -> float:
        """Integral bound for the tail sum of amplitude * n^exponent, n > start."""
        if self.exponent >= -1.0:
            return np.inf
        amp = np.exp(self.log_amplitude)
        return amp * start ** (self.exponent + 1.0) / (-self.exponent - 1.0)


def _lsq_line(x: np.ndarray, y: np.ndarray):
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return float(coef[0]), float(coef[1]), rms


def fit_power_law(n: np.ndarray, vals: np.ndarray) -> PowerLawFit:
    """Fit |vals| ~ C n^p over strictly positive samples."""
    n = np.asarray(n, dtype=float)
    v = np.abs(np.asarray(vals, dtype=float))
    keep = (v > 0.0) & (n > 0.0)
    if keep.sum() < 2:
        raise ValueError("need at least 2 positive samples for a power-law fit")
    slope, intercept, rms = _lsq_line(np.log(n[keep]), np.log(v[keep]))
    return PowerLawFit(exponent=slope, log_amplitude=intercept, residual=rms,
                       n_points=int(keep.sum()))


def fit_geometric(n: np.ndarray, vals: np.ndarray):
    """Fit |vals| ~ C theta^n; returns (theta, log C, rms residual)."""
    n = np.asarray(n, dtype=float)
    v = np.abs(np.asarray(vals, dtype=float))
    keep = v > 0.0
    if keep.sum() < 2:
        raise ValueError("need at least 2 positive samples for a geometric fit")
    slope, intercept, rms = _lsq_line(n[keep], np.log(v[keep]))
    return float(np.exp(slope)), intercept, rms


def loglog_slope(x: np.ndarray, y: np.ndarray, window=None, min_points: int = 10) -> float:
    """Plain log-log least-squares slope of y against x on a window."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (x > 0.0) & (y > 0.0)
    if window is not None:
        m &= (x >= window[0]) & (x <= window[1])
    if m.sum() < min_points:
        raise ValueError(f"window keeps {int(m.sum())} points; need >= {min_points}")
    return _lsq_line(np.log(x[m]), np.log(y[m]))[0]
