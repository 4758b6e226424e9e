"""Decay-of-correlations estimation from transfer-operator iterates.

Operator iteration is deterministic, so polynomial rates are visible
over windows where trajectory estimators would drown in sampling
variance.  The canonical slow-rate trial is h - 1 (the invariant
density minus the constant), which carries the singular charge at the
neutral point; observables supported away from the neutral point decay
at the faster sharp rate and are reported, not asserted, against it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .fitting import fit_geometric, fit_power_law
from .grid import NonuniformGrid, observable_cell_integrals
from .maps import MapParams
from .transfer import UlamMatrix, assemble_transfer

__all__ = ["DecayFit", "correlation_sequence", "fit_decay", "smooth_bump",
           "DegenerateFitError"]

NOISE_FLOOR = 1e-14


class DegenerateFitError(ValueError):
    """Fewer than 10 usable points in the fit window."""


def smooth_bump(x, center: float = 0.5, radius: float = 0.3):
    """C-infinity bump supported in [center - radius, center + radius]."""
    u = (np.asarray(x, dtype=float) - center) / radius
    inside = np.abs(u) < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(inside, np.exp(1.0 - 1.0 / np.maximum(1e-300, 1.0 - u * u)),
                        0.0)
    return vals


def correlation_sequence(p: MapParams, phi: np.ndarray, psi, grid: NonuniformGrid,
                         n_max: int, matrix: UlamMatrix | None = None,
                         mass_tol: float = 1e-8) -> np.ndarray:
    """|integral(psi * L^n phi)| for n = 1..n_max.

    phi must be a zero-mean cell function (its total mass is checked);
    psi is any bounded observable, integrated per cell once up front.
    """
    w = grid.widths
    mass = float(np.sum(phi * w))
    if abs(mass) > mass_tol:
        raise ValueError(f"phi must have zero mean, got mass {mass:.3e}")
    if matrix is None:
        matrix = assemble_transfer(p, grid)
    psi_cells = observable_cell_integrals(psi, grid)
    out = np.empty(n_max)
    u = phi - mass
    for n in range(n_max):
        u = matrix.apply_values(u)
        out[n] = abs(float(np.dot(u, psi_cells)))
    return out


@dataclass(frozen=True)
class DecayFit:
    """Fitted decay rate of a correlation sequence."""

    alpha: float
    n: np.ndarray
    magnitudes: np.ndarray
    exponent: float
    window: tuple
    residual: float
    geometric_rate: float
    geometric_residual: float

    @property
    def prefers_geometric(self) -> bool:
        """Model selection by residual: geometric wins for alpha = 0."""
        return self.geometric_residual < self.residual

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,correlation\n")
        for n, c in zip(self.n, self.magnitudes):
            buf.write(f"{n},{c:.17g}\n")
        return buf.getvalue()


def fit_decay(seq: np.ndarray, window=(50, 2000), alpha: float = float("nan"),
              noise_floor: float = NOISE_FLOOR) -> DecayFit:
    """Least-squares slope of log |corr| against log n on the window.

    Burn-in below the window start is excluded, as are entries at the
    solver noise floor.  A geometric fit on the same points is carried
    along for model comparison.
    """
    seq = np.asarray(seq, dtype=float)
    n = np.arange(1, len(seq) + 1)
    m = (n >= window[0]) & (n <= window[1]) & (seq > noise_floor)
    if m.sum() < 10:
        raise DegenerateFitError(
            f"only {int(m.sum())} usable points in window {window}")
    power = fit_power_law(n[m], seq[m])
    theta, _, geo_res = fit_geometric(n[m], seq[m])
    return DecayFit(alpha=alpha, n=n[m], magnitudes=seq[m],
                    exponent=power.exponent, window=tuple(window),
                    residual=power.residual, geometric_rate=theta,
                    geometric_residual=geo_res)
