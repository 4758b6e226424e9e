"""The derivative of the invariant measure in the family parameter.

The derivative of alpha -> integral of psi d mu_alpha equals the
pairing of psi with the resolvent (id - L)^-1 applied to the source

    source = d/dalpha (L_alpha h_alpha)
           = - sum over neutral branches of (X_i * N_i h_alpha)',

where X_i is the pulled-back family velocity and N_i the branch
operator.  The resolvent is summed as a Neumann series, which
converges because the source has zero mean.  The same quantity is
estimated independently by finite differences of the invariant measure
in alpha; the acceptance suite compares the two.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import maps
from .fitting import fit_geometric, fit_power_law
from .grid import (GridDensity, NonuniformGrid, cell_derivative,
                   observable_cell_integrals)
from .maps import MapParams
from .transfer import (InvariantDensityResult, UlamMatrix, assemble_branch_transfer,
                       assemble_transfer, invariant_density, l1_norm)

__all__ = [
    "SolverConfig",
    "NeumannResult",
    "FiniteDifferenceResult",
    "ResponseReport",
    "NeumannDivergenceError",
    "source_term",
    "neumann_sum",
    "response_formula",
    "fd_derivative",
    "dalpha2_transfer_diagnostic",
]

FD_STEPS_DEFAULT = (1e-2, 5e-3, 2.5e-3)


class NeumannDivergenceError(RuntimeError):
    """Series terms stopped decreasing: alpha too close to 1 for the grid."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the response pipeline."""

    tol_fix: float = 1e-10
    max_iter: int = 10 ** 6
    j_max: int = 2000
    tol_tail_rel: float = 1e-5
    tol_tail_abs: float = 1e-8
    source_mass_tol: float = 1e-4
    fd_steps: tuple = FD_STEPS_DEFAULT


def source_term(p: MapParams, h: GridDensity, grid: NonuniformGrid,
                method: str = "flux") -> np.ndarray:
    """Signed cell values of d/dalpha (L_alpha h), the response source.

    method "flux" differentiates the edge-interpolated products
    X_i * (N_i h) in conservative form, so the discrete integral
    telescopes to exactly zero (the products vanish at both ends of
    the circle).  method "product" expands by the product rule with
    analytic X, X' and centered differences for (N_i h)'; its integral
    is only approximately zero, which is why flux is the default.
    """
    if method not in ("flux", "product"):
        raise ValueError("method must be 'flux' or 'product'")
    w = grid.widths
    centers = grid.centers
    out = np.zeros(grid.size)
    for i in p.neutral_branches:
        branch_op = assemble_branch_transfer(p, i, grid)
        eta = branch_op.apply_values(h.values)
        if method == "flux":
            inner = grid.edges[1:-1]
            eta_edges = np.interp(inner, centers, eta)
            flux = np.zeros(grid.size + 1)
            flux[1:-1] = maps.pullback_velocity(p, i, inner, 0) * eta_edges
            # X * N_i h -> 0 at both 0 and 1 (velocity vanishes at the
            # neutral point and at the branch endpoint image).
            out -= np.diff(flux) / w
        else:
            out -= (maps.pullback_velocity(p, i, centers, 1) * eta
                    + maps.pullback_velocity(p, i, centers, 0)
                    * cell_derivative(eta, grid))
    return out


@dataclass(frozen=True)
class NeumannResult:
    """Truncated resolvent pairing with term history and tail estimate."""

    value: float
    terms: np.ndarray
    truncation: int
    tail_estimate: float
    stopped_on: str  # "tail", "floor" or "j_max"


def neumann_sum(p: MapParams, source: np.ndarray, psi, grid: NonuniformGrid,
                j_max: int = 2000, tol_tail_rel: float = 1e-5,
                tol_tail_abs: float = 1e-8, source_mass_tol: float = 1e-4,
                matrix: UlamMatrix | None = None,
                psi_cells: np.ndarray | None = None) -> NeumannResult:
    """Sum of integral(psi * L^j source) over j >= 0.

    The source must have (numerically) zero mean or the series cannot
    converge; the residual discretization mean is checked against
    source_mass_tol and projected out.  Truncates when a power-law fit
    of the recent term magnitudes bounds the tail below
    max(tol_tail_rel * |partial sum|, tol_tail_abs), or when terms hit
    the floating-point floor.  Raises NeumannDivergenceError if the
    term magnitudes stop decreasing.
    """
    w = grid.widths
    if matrix is None:
        matrix = assemble_transfer(p, grid)
    if psi_cells is None:
        psi_cells = observable_cell_integrals(psi, grid)
    raw_mass = float(np.sum(source * w))
    if abs(raw_mass) > source_mass_tol:
        raise ValueError(f"source mass {raw_mass:.3e} exceeds {source_mass_tol:.0e}")
    u = source - raw_mass
    terms = [float(np.dot(u, psi_cells))]
    total = terms[0]
    scale = max(abs(total), l1_norm(u, grid))
    floor = 1e-17 * max(scale, 1.0)
    floor_run = 0
    tail = math.inf
    stopped = "j_max"
    fit_window = 50
    for j in range(1, j_max + 1):
        u = matrix.apply_values(u)
        t = float(np.dot(u, psi_cells))
        terms.append(t)
        total += t
        if abs(t) < floor:
            floor_run += 1
            if floor_run >= 5:
                tail, stopped = 0.0, "floor"
                break
        else:
            floor_run = 0
        if j >= 30 and j % 10 == 0:
            recent = np.abs(np.array(terms[max(1, j - fit_window):]))
            half = len(recent) // 2
            if np.median(recent[half:]) > 2.0 * np.median(recent[:half]) and \
                    np.median(recent[half:]) > 1e3 * floor:
                raise NeumannDivergenceError(
                    f"term magnitudes increasing near j={j}; "
                    f"alpha={p.alpha} is too singular for this grid")
            ns = np.arange(j - len(recent) + 1, j + 1, dtype=float)
            keep = recent > 0.0
            if keep.sum() >= 10:
                fitted = fit_power_law(ns[keep], recent[keep])
                tail = fitted.tail_sum(float(j))
                if tail <= max(tol_tail_rel * abs(total), tol_tail_abs):
                    stopped = "tail"
                    break
    return NeumannResult(value=total, terms=np.array(terms),
                         truncation=len(terms) - 1,
                         tail_estimate=float(tail), stopped_on=stopped)


@dataclass(frozen=True)
class FiniteDifferenceResult:
    """Difference quotients of the invariant measure and their limit."""

    quotients: tuple  # (step, quotient) pairs, steps decreasing
    limit: float
    uncertainty: float
    one_sided: bool
    tainted: bool  # some density solve did not converge

    @property
    def steps(self):
        return tuple(s for s, _ in self.quotients)


def _measure_of(p_alpha: float, psi_cells: np.ndarray, grid: NonuniformGrid,
                cfg: SolverConfig, cache: dict) -> tuple:
    key = round(p_alpha, 15)
    if key not in cache:
        pa = MapParams(alpha=p_alpha)
        res = invariant_density(pa, grid, tol_fix=cfg.tol_fix, max_iter=cfg.max_iter)
        cache[key] = (float(np.dot(res.density.values, psi_cells)), res.converged)
    return cache[key]


def fd_derivative(p: MapParams, psi, grid: NonuniformGrid,
                  cfg: SolverConfig = SolverConfig(),
                  cache: dict | None = None) -> FiniteDifferenceResult:
    """Finite-difference derivative of alpha -> integral psi d mu_alpha.

    Centered quotients on the step ladder, one-sided at alpha = 0, and
    Richardson extrapolation on the two finest steps.  The uncertainty
    is the spread between the extrapolated limit and the finest
    quotient refinement.
    """
    steps = tuple(sorted(cfg.fd_steps, reverse=True))
    if p.alpha + max(steps) >= 1.0:
        raise ValueError("alpha + max step must stay below 1")
    one_sided = p.alpha == 0.0
    psi_cells = observable_cell_integrals(psi, grid)
    cache = {} if cache is None else cache
    tainted = False
    quotients = []
    for s in steps:
        if one_sided:
            hi, ok_hi = _measure_of(s, psi_cells, grid, cfg, cache)
            lo, ok_lo = _measure_of(0.0, psi_cells, grid, cfg, cache)
            q = (hi - lo) / s
        else:
            hi, ok_hi = _measure_of(p.alpha + s, psi_cells, grid, cfg, cache)
            lo, ok_lo = _measure_of(p.alpha - s, psi_cells, grid, cfg, cache)
            q = (hi - lo) / (2.0 * s)
        tainted |= not (ok_hi and ok_lo)
        quotients.append((s, q))
    if len(quotients) >= 2:
        (s1, q1), (s0, q0) = quotients[-2], quotients[-1]
        if abs(s1 - 2.0 * s0) > 1e-12 * s0:
            limit, unc = q0, abs(q0 - q1)
        elif one_sided:
            limit = 2.0 * q0 - q1
            unc = abs(limit - q0)
        else:
            limit = (4.0 * q0 - q1) / 3.0
            unc = abs(limit - q0)
    else:
        limit, unc = quotients[-1][1], math.inf
    return FiniteDifferenceResult(quotients=tuple(quotients), limit=limit,
                                  uncertainty=unc, one_sided=one_sided,
                                  tainted=tainted)


@dataclass(frozen=True)
class ResponseReport:
    """Paired formula value and finite-difference derivative."""

    alpha: float
    psi_id: str
    formula_value: float
    neumann: NeumannResult | None
    fd: FiniteDifferenceResult | None
    grid_meta: str
    source_raw_mass: float = float("nan")
    density_converged: bool = True

    @property
    def fd_limit(self) -> float:
        return self.fd.limit if self.fd else float("nan")

    @property
    def fd_uncertainty(self) -> float:
        return self.fd.uncertainty if self.fd else float("nan")

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "psi_id": self.psi_id,
            "formula_value": self.formula_value,
            "fd_limit": self.fd_limit,
            "fd_uncertainty": self.fd_uncertainty,
            "J": self.neumann.truncation if self.neumann else None,
            "tail_estimate": self.neumann.tail_estimate if self.neumann else None,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)

    def to_csv(self) -> str:
        """One row per Neumann term, then one row per FD step."""
        buf = io.StringIO()
        buf.write("kind,index_or_step,value\n")
        if self.neumann is not None:
            for j, t in enumerate(self.neumann.terms):
                buf.write(f"neumann_term,{j},{t:.17g}\n")
        if self.fd is not None:
            for s, q in self.fd.quotients:
                buf.write(f"fd_quotient,{s:.17g},{q:.17g}\n")
        return buf.getvalue()


def response_formula(p: MapParams, psi, grid: NonuniformGrid,
                     cfg: SolverConfig = SolverConfig(), psi_id: str = "psi",
                     matrix: UlamMatrix | None = None,
                     density: InvariantDensityResult | None = None,
                     with_fd: bool = False) -> ResponseReport:
    """Evaluate the response derivative via the resolvent series.

    Pipeline: invariant density, response source, Neumann sum.  Set
    with_fd to attach the finite-difference cross-check.
    """
    if matrix is None:
        matrix = assemble_transfer(p, grid)
    if density is None:
        density = invariant_density(p, grid, tol_fix=cfg.tol_fix,
                                    max_iter=cfg.max_iter, matrix=matrix)
    src = source_term(p, density.density, grid)
    raw_mass = float(np.sum(src * grid.widths))
    neumann = neumann_sum(p, src, psi, grid, j_max=cfg.j_max,
                          tol_tail_rel=cfg.tol_tail_rel,
                          tol_tail_abs=cfg.tol_tail_abs,
                          source_mass_tol=cfg.source_mass_tol, matrix=matrix)
    fd = fd_derivative(p, psi, grid, cfg) if with_fd else None
    return ResponseReport(alpha=p.alpha, psi_id=psi_id,
                          formula_value=neumann.value, neumann=neumann, fd=fd,
                          grid_meta=grid.describe(), source_raw_mass=raw_mass,
                          density_converged=density.converged)


def dalpha2_transfer_diagnostic(p: MapParams, phi: np.ndarray,
                                grid: NonuniformGrid) -> np.ndarray:
    """Second parameter derivative of L applied to phi (diagnostic only).

    Assembled from the analytic first/second pullback fields and grid
    differences; used to check the boundedness envelope
    C (1 + |ln x|)^2 near the neutral point, not to compute responses.
    """
    centers = grid.centers
    out = np.zeros(grid.size)
    for i in p.neutral_branches:
        eta = assemble_branch_transfer(p, i, grid).apply_values(phi)
        x0 = maps.pullback_velocity(p, i, centers, 0)
        x1 = maps.pullback_velocity(p, i, centers, 1)
        dax = maps.dalpha_pullback_velocity(p, i, centers)
        prod = x0 * eta
        dprod = cell_derivative(prod, grid)
        out += (-cell_derivative(dax * eta, grid)
                + x1 * dprod + x0 * cell_derivative(dprod, grid))
    return out
