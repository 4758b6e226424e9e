"""Experiment configuration: flat key=value sections, strictly validated.

The format is INI-style (configparser): section headers group the map,
grid, solver, experiment and output settings.  Unknown sections or
keys are errors, never silently ignored.  Every key can be overridden
by an environment variable INTERMAP_<SECTION>_<KEY>, and a few common
ones by CLI flags.  The authoritative schema lives in _SCHEMA below
and is mirrored by the shipped config.schema.txt.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "schema_text",
           "ENV_PREFIX", "EXPERIMENT_KINDS"]

ENV_PREFIX = "INTERMAP"

EXPERIMENT_KINDS = ("density", "response", "decay", "cones", "kernel",
                    "solenoid", "acceptance")


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


@dataclass
class ExperimentConfig:
    """Resolved settings for one experiment run."""

    kind: str = "density"
    # map
    alpha: float = 0.2
    # grid
    m_total: int = 2 ** 14
    refinement_ratio: float = 0.7
    n_geometric: int = 60
    # solver
    tol_fix: float = 1e-10
    max_iter: int = 10 ** 6
    j_max: int = 2000
    tol_tail_abs: float = 1e-8
    # experiment extras
    psi: str = "cos"
    n_max: int = 2000
    fit_lo: int = 50
    fit_hi: int = 2000
    eps: float = 2.0 ** -6
    trial_count: int = 100
    orbit_length: int = 10 ** 7
    burn_in: int = 10 ** 4
    n_streams: int = 256
    k_depth: int = 12
    suite: str = "all"
    # run control
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"


_SCHEMA = {
    "experiment": {
        "kind": ("experiment to run: " + "|".join(EXPERIMENT_KINDS), str, "kind"),
        "psi": ("observable id: cos|sin|one|identity", str, "psi"),
        "n_max": ("operator iterations for decay sequences", int, "n_max"),
        "fit_lo": ("decay fit window start", int, "fit_lo"),
        "fit_hi": ("decay fit window end", int, "fit_hi"),
        "eps": ("ball radius of the averaging operator", float, "eps"),
        "trial_count": ("random cone trials", int, "trial_count"),
        "orbit_length": ("total solenoid orbit steps", int, "orbit_length"),
        "burn_in": ("discarded steps per orbit stream", int, "burn_in"),
        "n_streams": ("parallel orbit streams", int, "n_streams"),
        "k_depth": ("fiber iteration depth for envelope lifts", int, "k_depth"),
        "suite": ("acceptance selector: all|fast", str, "suite"),
    },
    "map": {
        "alpha": ("intermittency exponent in [0, 1)", float, "alpha"),
    },
    "grid": {
        "m_total": ("total cell count", int, "m_total"),
        "refinement_ratio": ("geometric shrink factor in (0, 1)", float,
                             "refinement_ratio"),
        "n_geometric": ("refined cells at each end", int, "n_geometric"),
    },
    "solver": {
        "tol_fix": ("L1 stopping tolerance of the density iteration", float,
                    "tol_fix"),
        "max_iter": ("density iteration cap", int, "max_iter"),
        "j_max": ("resolvent series truncation cap", int, "j_max"),
        "tol_tail_abs": ("absolute tail tolerance of the series", float,
                         "tol_tail_abs"),
    },
    "run": {
        "seed": ("base seed for all generators", int, "seed"),
        "workers": ("worker count (results are worker-count independent)",
                    int, "workers"),
        "out_dir": ("artifact directory", str, "out_dir"),
    },
}


def schema_text() -> str:
    """Render the schema as the shipped documentation file."""
    lines = ["# Configuration schema: sections and keys accepted by intermap.",
             "# Unknown sections or keys are rejected.  Environment overrides",
             f"# use {ENV_PREFIX}_<SECTION>_<KEY>, e.g. {ENV_PREFIX}_MAP_ALPHA.",
             ""]
    defaults = ExperimentConfig()
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (doc, typ, attr) in keys.items():
            lines.append(f"{key} = {getattr(defaults, attr)}"
                         f"    ; {typ.__name__}: {doc}")
        lines.append("")
    return "\n".join(lines)


def _coerce(section: str, key: str, raw: str, typ):
    try:
        if typ is int:
            return int(float(raw)) if ("e" in raw or "." in raw) else int(raw)
        return typ(raw)
    except ValueError as err:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from err


def load_config(path: str | None = None, overrides: dict | None = None,
                environ: dict | None = None) -> ExperimentConfig:
    """Build a config from file, environment and CLI overrides (in that
    order of increasing precedence)."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err
        except configparser.Error as err:
            raise ConfigError(f"cannot parse config file {path}: {err}") from err
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                doc, typ, attr = _SCHEMA[section][key]
                setattr(cfg, attr, _coerce(section, key, raw, typ))
    env = os.environ if environ is None else environ
    for section, keys in _SCHEMA.items():
        for key, (doc, typ, attr) in keys.items():
            var = f"{ENV_PREFIX}_{section.upper()}_{key.upper()}"
            if var in env:
                setattr(cfg, attr, _coerce(section, key, env[var], typ))
    for attr, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, attr, value)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    if not (0.0 <= cfg.alpha < 1.0):
        raise ConfigError(f"alpha must lie in [0, 1), got {cfg.alpha}")
    if cfg.suite not in ("all", "fast"):
        raise ConfigError(f"unknown acceptance suite {cfg.suite!r}")
    if cfg.psi not in ("cos", "sin", "one", "identity"):
        raise ConfigError(f"unknown observable id {cfg.psi!r}")
