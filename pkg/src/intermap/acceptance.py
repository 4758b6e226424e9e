"""The acceptance suite: one callable per criterion, shared caches.

Each criterion function returns a CriterionResult carrying the pass
flag and the measured quantities, so the CLI runner and the pytest
module share one implementation.  Tolerances are pinned here, in code,
at the values the criteria state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import maps
from .cones import (ConeParams, calibrate_first_order, cone_floor_bound,
                    first_order_margin, invariance_harness, iterate_infimum,
                    make_cone_trials)
from .correlations import correlation_sequence, fit_decay
from .fitting import loglog_slope
from .grid import (GridDensity, NonuniformGrid, build_grid, cell_derivative,
                   lebesgue_integral, observable_cell_integrals, project)
from .maps import MapParams, circle_distance, map_value, partition_sequences
from .response import (SolverConfig, fd_derivative, neumann_sum, response_formula,
                       source_term)
from .solenoid import (OrbitConfig, SolenoidState, orbit_ensemble_mean,
                       solenoid_step, srb_expectation)
from .transfer import (assemble_branch_transfer, assemble_transfer,
                       invariant_density, kernel_min, l1_norm, perturbed_operator)

__all__ = ["AcceptanceContext", "CriterionResult", "run_acceptance",
           "CRITERIA", "FAST_EXCLUDED"]


def psi_cos(x):
    return np.cos(2.0 * np.pi * np.asarray(x, dtype=float))


def psi_one(x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass
class CriterionResult:
    cid: str
    passed: bool
    measures: dict
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.cid}: {status}  {self.note}".rstrip()


# Density-solver tolerances per alpha: the iteration slows polynomially
# as alpha grows, so the singular cases run at a looser (still far
# sub-criterion) tolerance to keep the suite at desk scale.
_SOLVER_PLAN = {0.5: (1e-9, 400_000), 0.67: (1e-8, 400_000), 0.8: (1e-8, 400_000)}


class AcceptanceContext:
    """Caches the grid, transfer matrices and densities across criteria."""

    def __init__(self, m_total: int = 2 ** 14, seed: int = 0):
        self.grid = build_grid(m_total)
        self.kernel_grid = build_grid(1024, 0.7, 40)
        self.seed = seed
        self._matrices: dict = {}
        self._densities: dict = {}

    def matrix(self, alpha: float, grid: NonuniformGrid | None = None):
        grid = grid if grid is not None else self.grid
        key = (round(alpha, 12), id(grid))
        if key not in self._matrices:
            self._matrices[key] = assemble_transfer(MapParams(alpha), grid)
        return self._matrices[key]

    def density(self, alpha: float):
        key = round(alpha, 12)
        if key not in self._densities:
            tol, cap = _SOLVER_PLAN.get(key, (1e-10, 10 ** 6))
            self._densities[key] = invariant_density(
                MapParams(alpha), self.grid, tol_fix=tol, max_iter=cap,
                matrix=self.matrix(alpha))
        return self._densities[key]


def crit_a1_response_agreement(ctx: AcceptanceContext) -> CriterionResult:
    """Formula vs Richardson FD limit at alpha 0.2, 0.1 and one-sided 0."""
    measures = {}
    ok = True
    for alpha in (0.2, 0.1, 0.0):
        p = MapParams(alpha)
        cfg = SolverConfig()
        rep = response_formula(p, psi_cos, ctx.grid, cfg, psi_id="cos",
                               matrix=ctx.matrix(alpha), density=ctx.density(alpha))
        fd = fd_derivative(p, psi_cos, ctx.grid, cfg)
        tol = max(0.05 * abs(fd.limit), 1e-3)
        err = abs(rep.formula_value - fd.limit)
        measures[f"alpha={alpha}"] = {
            "formula": rep.formula_value, "fd_limit": fd.limit,
            "error": err, "tolerance": tol, "J": rep.neumann.truncation,
        }
        ok &= err <= tol and not fd.tainted
    return CriterionResult("A1", ok, measures,
                           "response formula vs finite differences, psi=cos")


def crit_a2_null_response(ctx: AcceptanceContext) -> CriterionResult:
    """psi = 1 gives zero response by normalization, both routes."""
    measures = {}
    ok = True
    for alpha in (0.0, 0.2, 0.4):
        p = MapParams(alpha)
        cfg = SolverConfig()
        rep = response_formula(p, psi_one, ctx.grid, cfg, psi_id="one",
                               matrix=ctx.matrix(alpha), density=ctx.density(alpha))
        fd = fd_derivative(p, psi_one, ctx.grid, cfg)
        measures[f"alpha={alpha}"] = {"formula": rep.formula_value,
                                      "fd_limit": fd.limit}
        ok &= abs(rep.formula_value) <= 1e-6 and abs(fd.limit) <= 1e-6
    return CriterionResult("A2", ok, measures, "null response for psi = 1")


def crit_a3_density_doubling(ctx: AcceptanceContext) -> CriterionResult:
    """At alpha = 0 the invariant density is the constant 1."""
    res = ctx.density(0.0)
    sup_err = float(np.max(np.abs(res.density.values - 1.0)))
    ok = sup_err <= 1e-8 and res.converged
    return CriterionResult("A3", ok, {"sup_error": sup_err,
                                      "iterations": res.iterations},
                           f"sup|h-1| = {sup_err:.2e}")


def crit_a4_singularity_exponent(ctx: AcceptanceContext) -> CriterionResult:
    """Log-log slope of the density on [1e-3, 1e-1] against -alpha.

    Checked near 0 and, mirrored, near 1.  Note: for this family the
    stated window is pre-asymptotic (the local slope reaches -alpha
    only below x ~ 1e-4; confirmed against trajectory histograms), so
    this criterion fails honestly; see the deep-window property test
    for the asymptotic check that does hold.
    """
    measures = {}
    ok = True
    for alpha in (0.3, 0.5, 0.67):
        dens = ctx.density(alpha).density
        centers = ctx.grid.centers
        slope0 = loglog_slope(centers, dens.values, window=(1e-3, 1e-1))
        slope1 = loglog_slope(1.0 - centers[::-1], dens.values[::-1],
                              window=(1e-3, 1e-1))
        measures[f"alpha={alpha}"] = {"slope_at_0": slope0, "slope_at_1": slope1,
                                      "target": -alpha}
        ok &= abs(slope0 + alpha) <= 0.05 and abs(slope1 + alpha) <= 0.05
    return CriterionResult("A4", ok, measures,
                           "density singularity exponent on [1e-3, 1e-1]")


def crit_a5_source_zero_mean(ctx: AcceptanceContext) -> CriterionResult:
    """The response source integrates to zero."""
    measures = {}
    ok = True
    for alpha in (0.0, 0.1, 0.2, 0.3, 0.5):
        p = MapParams(alpha)
        src = source_term(p, ctx.density(alpha).density, ctx.grid)
        mass = float(np.sum(src * ctx.grid.widths))
        measures[f"alpha={alpha}"] = {"source_mass": mass}
        ok &= abs(mass) <= 1e-6
    return CriterionResult("A5", ok, measures, "source-term zero mean")


def crit_a6_decay_exponent(ctx: AcceptanceContext) -> CriterionResult:
    """Correlation decay rate 1 - 1/alpha for the singular-charge trial.

    The trial h - 1 carries the neutral-point charge that realizes the
    slow rate; the exponents must also order strictly across alpha.
    """
    measures = {}
    exps = {}
    ok = True
    for alpha in (0.3, 0.5, 0.67):
        p = MapParams(alpha)
        h = ctx.density(alpha).density.values
        phi = h - 1.0
        seq = correlation_sequence(p, phi - np.sum(phi * ctx.grid.widths),
                                   psi_cos, ctx.grid, n_max=2000,
                                   matrix=ctx.matrix(alpha))
        fit = fit_decay(seq, window=(50, 2000), alpha=alpha)
        exps[alpha] = fit.exponent
        measures[f"alpha={alpha}"] = {"exponent": fit.exponent,
                                      "target": 1.0 - 1.0 / alpha}
        if alpha in (0.5, 0.67):
            ok &= abs(fit.exponent - (1.0 - 1.0 / alpha)) <= 0.25
    ordered = exps[0.3] < exps[0.5] < exps[0.67]
    measures["rate_ordering_increasing"] = bool(ordered)
    ok &= ordered
    return CriterionResult("A6", ok, measures, "polynomial correlation decay")


def crit_a7_partition_asymptotics(ctx: AcceptanceContext) -> CriterionResult:
    """Backward-orbit scale z_n ~ n^(-1/alpha)."""
    measures = {}
    ok = True
    for alpha in (0.5, 0.8):
        seqs = partition_sequences(MapParams(alpha), 10 ** 4)
        slope = seqs.fit_exponent(window=(100, 10 ** 4))
        measures[f"alpha={alpha}"] = {"slope": slope, "target": -1.0 / alpha}
        ok &= abs(slope + 1.0 / alpha) <= 0.1
    return CriterionResult("A7", ok, measures, "partition sequence asymptotics")


def crit_a8_kernel_contraction(ctx: AcceptanceContext) -> CriterionResult:
    """Kernel positivity within the n = O(eps^-alpha) cap, then Doeblin
    contraction of the perturbed operator at the measured gamma."""
    alpha, eps = 0.3, 2.0 ** -6
    p = MapParams(alpha)
    grid = ctx.kernel_grid
    matrix = ctx.matrix(alpha, grid)
    scan = kernel_min(p, eps, grid, matrix=matrix)
    cap = int(np.ceil(8.0 * eps ** (-alpha)))
    measures = {"gamma": scan.gamma, "n_eps": scan.n_eps, "cap": cap}
    ok = scan.positive and scan.n_eps is not None and scan.n_eps <= cap
    if ok:
        pert = perturbed_operator(p, eps, scan.n_eps, grid, matrix=matrix)
        rng = np.random.default_rng(ctx.seed)
        worst = -math.inf
        for _ in range(10):
            phi = rng.standard_normal(grid.size)
            phi -= np.sum(phi * grid.widths)
            norm = l1_norm(phi, grid)
            vals = phi
            for k in range(1, 6):
                vals = pert.apply_values(vals)
                bound = (1.0 - scan.gamma) ** k * norm + 1e-8
                worst = max(worst, l1_norm(vals, grid) - bound)
        measures["contraction_slack"] = worst
        ok &= worst <= 0.0
    return CriterionResult("A8", ok, measures,
                           f"kernel gamma={scan.gamma:.3e} at n_eps={scan.n_eps}")


def crit_a9_cone_invariance(ctx: AcceptanceContext) -> CriterionResult:
    """First-order cone invariance with calibrated constants."""
    alpha = 0.3
    p = MapParams(alpha)
    h = ctx.density(alpha).density.values
    cp = calibrate_first_order(p, ctx.grid, h, trial_count=20, seed=ctx.seed)
    report = invariance_harness("L", "first_order", cp, p, ctx.grid, h,
                                trial_count=100, seed=ctx.seed + 1)
    measures = {"a1": cp.a1, "b1": cp.b1, "pass_rate": report.pass_rate,
                "worst_margin": float(report.margins.min())}
    ok = report.pass_rate == 1.0

    # interior floor of Proposition-level bound at delta = 0.1
    delta = 0.1
    floor = cone_floor_bound(cp, delta)
    trials = make_cone_trials(p, ctx.grid, h, cp, 20, ctx.seed + 2)
    away = circle_distance(ctx.grid.centers) >= delta
    floor_ok = True
    for vals, _ in trials:
        mass = float(np.sum(vals * ctx.grid.widths))
        floor_ok &= float(vals[away].min()) >= floor * mass
    measures["floor_bound"] = floor
    measures["floor_holds"] = bool(floor_ok)
    ok &= floor_ok

    inf_l1 = iterate_infimum(ctx.matrix(alpha), n_max=200)
    measures["inf_iterates_of_1"] = inf_l1
    ok &= inf_l1 > 0.0
    return CriterionResult("A9", ok, measures,
                           f"calibrated (a1,b1)=({cp.a1:g},{cp.b1:g}), "
                           f"worst margin {report.margins.min():.2e}")


def crit_a10_operator_identities(ctx: AcceptanceContext) -> CriterionResult:
    """Duality, branch decomposition, inverse-branch parameter derivative
    and the mixed-derivative commutation."""
    alpha = 0.3
    p = MapParams(alpha)
    grid = ctx.grid
    matrix = ctx.matrix(alpha)
    rng = np.random.default_rng(ctx.seed)
    measures = {}

    # duality against 20 random smooth observables
    worst_dual = 0.0
    phi = project(lambda x: 1.0 + 0.5 * np.sin(2.0 * np.pi * x) ** 2, grid)
    lphi = matrix.apply(phi)
    for _ in range(20):
        a1, a2 = rng.normal(size=2)
        b1, b2 = rng.normal(size=2)

        def psi(x, a1=a1, a2=a2, b1=b1, b2=b2):
            t = 2.0 * np.pi * np.asarray(x, dtype=float)
            return (a1 * np.cos(t) + b1 * np.sin(t)
                    + a2 * np.cos(2 * t) + b2 * np.sin(2 * t))

        lhs = lebesgue_integral(lphi, psi)
        rhs = lebesgue_integral(phi, lambda x: psi(map_value(p, x)))
        worst_dual = max(worst_dual, abs(lhs - rhs))
    measures["duality_error"] = worst_dual
    ok = worst_dual <= 1e-6

    # branch decomposition: sum of branch operators equals the full one
    vals = rng.random(grid.size)
    total = sum(assemble_branch_transfer(p, i, grid).apply_values(vals)
                for i in (1, 2))
    branch_err = float(np.max(np.abs(total - matrix.apply_values(vals))))
    measures["branch_sum_error"] = branch_err
    ok &= branch_err <= 1e-12

    # parameter derivative of the inverse branch vs centered differences
    xs = np.array([0.15, 0.4, 0.6, 0.85])
    step = 1e-5
    worst_g = 0.0
    worst_comm = 0.0
    for i in (1, 2):
        exact = maps.dalpha_branch_inverse(p, i, xs)
        hi = maps.branch_inverse(MapParams(alpha + step), i, xs)
        lo = maps.branch_inverse(MapParams(alpha - step), i, xs)
        fd = (np.asarray(hi) - np.asarray(lo)) / (2.0 * step)
        worst_g = max(worst_g, float(np.max(np.abs(fd - exact) / np.abs(exact))))

        # commutation: d_alpha(g') against (d_alpha g)' via x-differences
        gp_hi = maps.branch_inverse_derivative(MapParams(alpha + step), i, xs, 1)
        gp_lo = maps.branch_inverse_derivative(MapParams(alpha - step), i, xs, 1)
        dag_prime = (np.asarray(gp_hi) - np.asarray(gp_lo)) / (2.0 * step)
        hx = 1e-5
        dgx = (np.asarray(maps.dalpha_branch_inverse(p, i, xs + hx))
               - np.asarray(maps.dalpha_branch_inverse(p, i, xs - hx))) / (2.0 * hx)
        worst_comm = max(worst_comm,
                         float(np.max(np.abs(dag_prime - dgx) / np.abs(dgx))))
    measures["dalpha_inverse_rel_error"] = worst_g
    measures["commutation_rel_error"] = worst_comm
    ok &= worst_g <= 1e-4 and worst_comm <= 1e-3
    return CriterionResult("A10", ok, measures, "operator identities")


def crit_a11_solenoid(ctx: AcceptanceContext, fast: bool = False) -> CriterionResult:
    """Fiber contraction, semi-conjugacy, projection identity, and the
    statistical-stability gaps along alpha -> 0.2."""
    p = MapParams(0.2)
    rng = np.random.default_rng(ctx.seed)
    measures = {}

    # exact 1/5 fiber contraction for state pairs sharing x
    worst = 0.0
    for _ in range(100):
        x = float(rng.random())
        y1, z1, y2, z2 = rng.uniform(-0.7, 0.7, size=4)
        s1 = solenoid_step(p, SolenoidState(x, y1, z1))
        s2 = solenoid_step(p, SolenoidState(x, y2, z2))
        pre = math.hypot(y1 - y2, z1 - z2)
        post = math.hypot(s1.y - s2.y, s1.z - s2.z)
        worst = max(worst, abs(post - pre / 5.0))
    measures["contraction_defect"] = worst
    ok = worst <= 1e-14

    # semi-conjugacy is bit-for-bit the base map
    xs = rng.random(1000)
    states = [SolenoidState(float(x), 0.1, -0.2) for x in xs]
    semiconj = all(solenoid_step(p, s).x == map_value(p, s.x) for s in states)
    measures["semi_conjugacy_exact"] = bool(semiconj)
    ok &= semiconj

    # projection identity: base observable via orbits vs base density
    base = ctx.density(0.2).density
    orbit = OrbitConfig(orbit_length=10 ** 6 if fast else 10 ** 7,
                        burn_in=10 ** 4, n_streams=256, seed=ctx.seed)
    mean, se, _ = orbit_ensemble_mean(p, lambda x, y, z: psi_cos(x), orbit)
    exact = lebesgue_integral(base, psi_cos)
    measures["projection_gap"] = abs(mean - exact)
    measures["projection_se"] = se
    ok &= abs(mean - exact) <= 3.0 * se

    if not fast:
        gaps = []
        ref, _, _ = orbit_ensemble_mean(p, lambda x, y, z: y, orbit)
        for an in (0.25, 0.22, 0.21):
            mn, _, _ = orbit_ensemble_mean(MapParams(an), lambda x, y, z: y, orbit)
            gaps.append(abs(mn - ref))
        measures["stability_gaps"] = gaps
        decreasing = gaps[0] > gaps[1] > gaps[2]
        measures["gaps_decreasing"] = bool(decreasing)
        ok &= decreasing and gaps[-1] < gaps[0]
    return CriterionResult("A11", ok, measures, "solenoid statistics")


CRITERIA = {
    "A1": crit_a1_response_agreement,
    "A2": crit_a2_null_response,
    "A3": crit_a3_density_doubling,
    "A4": crit_a4_singularity_exponent,
    "A5": crit_a5_source_zero_mean,
    "A6": crit_a6_decay_exponent,
    "A7": crit_a7_partition_asymptotics,
    "A8": crit_a8_kernel_contraction,
    "A9": crit_a9_cone_invariance,
    "A10": crit_a10_operator_identities,
    "A11": crit_a11_solenoid,
}

FAST_EXCLUDED: tuple = ()  # every criterion runs; A11 shortens its orbits


def run_acceptance(selector: str = "all", m_total: int = 2 ** 14, seed: int = 0,
                   emit=print) -> list:
    """Run the acceptance criteria; selector "fast" trims the long
    solenoid orbits (everything else is unchanged)."""
    if selector not in ("all", "fast"):
        raise ValueError("selector must be 'all' or 'fast'")
    ctx = AcceptanceContext(m_total=m_total, seed=seed)
    results = []
    for cid, fn in CRITERIA.items():
        if cid == "A11":
            res = fn(ctx, fast=selector == "fast")
        else:
            res = fn(ctx)
        results.append(res)
        if emit:
            emit(res.line())
    return results
