"""Batch experiment driver.

Subcommands: density, response, decay, cones, kernel, solenoid,
acceptance.  Every run reads an optional config file plus flag/env
overrides, writes deterministic artifacts (CSV with 17 significant
digits and LF endings, one self-generated SVG per numeric series, a
JSON summary) into the output directory, and exits 0 only if the
run's assertions all pass (1 on assertion failure, 2 on bad config).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import maps
from .acceptance import run_acceptance
from .cones import calibrate_first_order, invariance_harness
from .config import ConfigError, ExperimentConfig, load_config
from .correlations import correlation_sequence, fit_decay
from .grid import GridDensity, build_grid, lebesgue_integral
from .maps import MapParams
from .response import SolverConfig, fd_derivative, response_formula
from .solenoid import OrbitConfig, orbit_ensemble_mean
from .transfer import assemble_transfer, invariant_density, kernel_min
from .svgplot import line_plot_svg

OBSERVABLES = {
    "cos": lambda x: np.cos(2.0 * np.pi * np.asarray(x, dtype=float)),
    "sin": lambda x: np.sin(2.0 * np.pi * np.asarray(x, dtype=float)),
    "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    "identity": lambda x: np.asarray(x, dtype=float),
}


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _csv(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def _summary_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


class Failures:
    def __init__(self):
        self.items = []

    def check(self, ok: bool, name: str, detail: str = "") -> None:
        if not ok:
            self.items.append({"check": name, "detail": detail})

    def empty(self) -> bool:
        return not self.items


def _run_density(cfg: ExperimentConfig, out: str, fail: Failures) -> dict:
    p = MapParams(cfg.alpha)
    grid = build_grid(cfg.m_total, cfg.refinement_ratio, cfg.n_geometric)
    matrix = assemble_transfer(p, grid)
    res = invariant_density(p, grid, cfg.tol_fix, cfg.max_iter, matrix=matrix)
    dens = res.density
    _write(os.path.join(out, "density.csv"), dens.to_csv())
    _write(os.path.join(out, "density.svg"),
           line_plot_svg(grid.centers, dens.values, title="invariant density",
                         xlabel="x", ylabel="h", xlog=cfg.alpha > 0,
                         ylog=cfg.alpha > 0))
    residual = res.fixed_point_residual(matrix)
    fail.check(res.converged, "density_converged",
               f"stopped after {res.iterations} iterations")
    fail.check(abs(dens.mass - 1.0) <= 1e-12, "unit_mass", f"mass={dens.mass!r}")
    fail.check(residual <= 10.0 * cfg.tol_fix, "fixed_point_residual",
               f"residual={residual:.3e}")
    summary = {"alpha": cfg.alpha, "converged": res.converged,
               "iterations": res.iterations, "mass": dens.mass,
               "fixed_point_residual": residual}
    if cfg.alpha == 0.0:
        sup_err = float(np.max(np.abs(dens.values - 1.0)))
        summary["sup_error_vs_1"] = sup_err
        fail.check(sup_err <= 1e-8, "doubling_density_exact",
                   f"sup|h-1|={sup_err:.3e}")
    return summary


def _run_response(cfg: ExperimentConfig, out: str, fail: Failures) -> dict:
    p = MapParams(cfg.alpha)
    grid = build_grid(cfg.m_total, cfg.refinement_ratio, cfg.n_geometric)
    psi = OBSERVABLES[cfg.psi]
    scfg = SolverConfig(tol_fix=cfg.tol_fix, max_iter=cfg.max_iter,
                        j_max=cfg.j_max, tol_tail_abs=cfg.tol_tail_abs)
    rep = response_formula(p, psi, grid, scfg, psi_id=cfg.psi, with_fd=True)
    _write(os.path.join(out, "response.csv"), rep.to_csv())
    terms = np.abs(rep.neumann.terms)
    _write(os.path.join(out, "response_terms.svg"),
           line_plot_svg(np.arange(len(terms)) + 1, np.maximum(terms, 1e-30),
                         title="resolvent series terms", xlabel="j",
                         ylabel="|term|", xlog=True, ylog=True))
    _write(os.path.join(out, "response_summary.json"),
           _summary_json(rep.summary()))
    tol = max(0.05 * abs(rep.fd_limit), 1e-3)
    fail.check(abs(rep.formula_value - rep.fd_limit) <= tol, "formula_vs_fd",
               f"|{rep.formula_value:.6g} - {rep.fd_limit:.6g}| > {tol:.2g}")
    fail.check(not rep.fd.tainted, "fd_untainted")
    return rep.summary()


def _run_decay(cfg: ExperimentConfig, out: str, fail: Failures) -> dict:
    p = MapParams(cfg.alpha)
    grid = build_grid(cfg.m_total, cfg.refinement_ratio, cfg.n_geometric)
    matrix = assemble_transfer(p, grid)
    res = invariant_density(p, grid, cfg.tol_fix, cfg.max_iter, matrix=matrix)
    phi = res.density.values - 1.0
    phi -= np.sum(phi * grid.widths)
    seq = correlation_sequence(p, phi, OBSERVABLES[cfg.psi], grid,
                               n_max=cfg.n_max, matrix=matrix)
    fit = fit_decay(seq, window=(cfg.fit_lo, cfg.fit_hi), alpha=cfg.alpha)
    _write(os.path.join(out, "decay.csv"), fit.to_csv())
    _write(os.path.join(out, "decay.svg"),
           line_plot_svg(fit.n, fit.magnitudes, title="correlation decay",
                         xlabel="n", ylabel="|corr|", xlog=True, ylog=True))
    med = np.array([np.median(seq[max(0, i - 2):i + 3])
                    for i in range(len(seq))])
    burn = max(10, cfg.fit_lo)
    trend_ok = bool(np.all(np.diff(med[burn:]) <= 1e-12 + 0.0 * med[burn:-1])
                    | (med[burn + 1:] <= med[burn:-1] * 1.05))
    fail.check(trend_ok, "monotone_trend", "smoothed sequence increased > 5%")
    fail.check(res.converged, "density_converged")
    return {"alpha": cfg.alpha, "exponent": fit.exponent,
            "geometric_rate": fit.geometric_rate,
            "prefers_geometric": fit.prefers_geometric,
            "window": list(fit.window)}


def _run_cones(cfg: ExperimentConfig, out: str, fail: Failures) -> dict:
    p = MapParams(cfg.alpha)
    grid = build_grid(cfg.m_total, cfg.refinement_ratio, cfg.n_geometric)
    res = invariant_density(p, grid, cfg.tol_fix, cfg.max_iter)
    h = res.density.values
    cp = calibrate_first_order(p, grid, h, seed=cfg.seed)
    report = invariance_harness("L", "first_order", cp, p, grid, h,
                                trial_count=cfg.trial_count, seed=cfg.seed + 1)
    _write(os.path.join(out, "cones.csv"), report.to_csv())
    _write(os.path.join(out, "cone_margins.svg"),
           line_plot_svg(np.arange(len(report.margins)), report.margins,
                         title="post-application cone margins",
                         xlabel="trial", ylabel="margin"))
    fail.check(report.pass_rate == 1.0, "cone_invariance",
               f"pass rate {report.pass_rate:.2f}")
    return {"alpha": cfg.alpha, "a1": cp.a1, "b1": cp.b1,
            "pass_rate": report.pass_rate,
            "worst_margin": float(report.margins.min()),
            "inflation": report.inflation}


def _run_kernel(cfg: ExperimentConfig, out: str, fail: Failures) -> dict:
    p = MapParams(cfg.alpha)
    grid = build_grid(min(cfg.m_total, 2048), cfg.refinement_ratio,
                      min(cfg.n_geometric, 40))
    scan = kernel_min(p, cfg.eps, grid)
    rows = [(n + 1, float(v)) for n, v in enumerate(scan.minima)]
    _write(os.path.join(out, "kernel.csv"), _csv("n,kernel_min", rows))
    _write(os.path.join(out, "kernel.svg"),
           line_plot_svg([r[0] for r in rows], [max(r[1], 0.0) for r in rows],
                         title="kernel minimum vs n", xlabel="n",
                         ylabel="min kernel"))
    fail.check(scan.positive, "kernel_positive",
               f"minimum {scan.gamma:.3e} after cap {scan.cap}")
    return {"alpha": cfg.alpha, "eps": cfg.eps, "gamma": scan.gamma,
            "n_eps": scan.n_eps, "cap": scan.cap}


def _run_solenoid(cfg: ExperimentConfig, out: str, fail: Failures) -> dict:
    p = MapParams(cfg.alpha)
    grid = build_grid(cfg.m_total, cfg.refinement_ratio, cfg.n_geometric)
    res = invariant_density(p, grid, cfg.tol_fix, cfg.max_iter)
    orbit = OrbitConfig(orbit_length=cfg.orbit_length, burn_in=cfg.burn_in,
                        n_streams=cfg.n_streams, seed=cfg.seed)
    psi = OBSERVABLES[cfg.psi]
    mean, se, stream_means = orbit_ensemble_mean(
        p, lambda x, y, z: psi(x), orbit)
    exact = lebesgue_integral(res.density, psi)
    ymean, yse, _ = orbit_ensemble_mean(p, lambda x, y, z: y, orbit)
    _write(os.path.join(out, "solenoid_streams.csv"),
           _csv("stream,mean", list(enumerate(map(float, stream_means)))))
    _write(os.path.join(out, "solenoid_streams.svg"),
           line_plot_svg(np.arange(len(stream_means)), stream_means,
                         title="per-stream Birkhoff means", xlabel="stream",
                         ylabel="mean"))
    gap = abs(mean - exact)
    fail.check(gap <= 3.0 * se, "projection_identity",
               f"gap {gap:.3e} vs 3 SE {3 * se:.3e}")
    return {"alpha": cfg.alpha, "psi": cfg.psi, "birkhoff": mean,
            "birkhoff_se": se, "base_integral": exact,
            "fiber_mean_y": ymean, "fiber_mean_y_se": yse}


def _run_acceptance(cfg: ExperimentConfig, out: str, fail: Failures) -> dict:
    results = run_acceptance(selector=cfg.suite, m_total=cfg.m_total,
                             seed=cfg.seed, emit=print)
    rows = [(r.cid, "pass" if r.passed else "fail") for r in results]
    _write(os.path.join(out, "acceptance.csv"), _csv("criterion,status", rows))
    for r in results:
        fail.check(r.passed, r.cid, r.note)
    return {"suite": cfg.suite,
            "criteria": {r.cid: {"passed": r.passed, "measures": r.measures}
                         for r in results}}


_RUNNERS = {
    "density": _run_density,
    "response": _run_response,
    "decay": _run_decay,
    "cones": _run_cones,
    "kernel": _run_kernel,
    "solenoid": _run_solenoid,
    "acceptance": _run_acceptance,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a config file")
    common.add_argument("--out", help="artifact output directory")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--workers", type=int,
                        help="worker count (never changes results)")
    common.add_argument("--M", type=int, dest="m_total", help="grid cell count")
    common.add_argument("--alpha", type=float, help="map parameter in [0, 1)")
    parser = argparse.ArgumentParser(
        prog="intermap",
        description="transfer-operator experiments for intermittent circle maps",
        parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("response", "decay", "solenoid"):
            sp.add_argument("--psi", choices=list(OBSERVABLES),
                            help="observable id")
        if name == "decay":
            sp.add_argument("--n-max", type=int, dest="n_max")
        if name == "kernel":
            sp.add_argument("--eps", type=float)
        if name == "solenoid":
            sp.add_argument("--orbit-length", type=int, dest="orbit_length")
        if name == "acceptance":
            sp.add_argument("--suite", choices=("all", "fast"))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {k: getattr(args, k, None)
                 for k in ("seed", "workers", "m_total", "alpha", "psi",
                           "n_max", "eps", "orbit_length", "suite")}
    overrides["kind"] = args.command
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    try:
        cfg = load_config(args.config, overrides=overrides)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    fail = Failures()
    summary = _RUNNERS[args.command](cfg, cfg.out_dir, fail)
    summary["assertions_passed"] = fail.empty()
    _write(os.path.join(cfg.out_dir, "summary.json"), _summary_json(summary))
    if not fail.empty():
        _write(os.path.join(cfg.out_dir, "failures.json"),
               _summary_json({"failures": fail.items}))
        for item in fail.items:
            print(f"FAILED {item['check']}: {item['detail']}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
