"""Transfer-operator numerics for intermittent circle maps.

A library for the two-branch circle family with a neutral fixed point:
closed-form map evaluation (`maps`), singularity-resolving grids
(`grid`), exact Ulam matrices and invariant densities (`transfer`),
the parameter derivative of the invariant measure (`response`),
invariant density cones (`cones`), correlation-decay fits
(`correlations`) and the contracting solenoid skew product built over
the family (`solenoid`).  `acceptance` bundles the validation suite
and `cli` drives batch experiments.
"""

from .config import ExperimentConfig, load_config
from .correlations import DecayFit, correlation_sequence, fit_decay
from .grid import (GridDensity, NonuniformGrid, build_grid, lebesgue_integral,
                   project)
from .maps import (MapParams, PartitionSequences, branch_inverse,
                   dalpha_branch_inverse, map_derivative, map_value,
                   parameter_velocity, partition_sequences, pullback_velocity)
from .response import (ResponseReport, SolverConfig, fd_derivative, neumann_sum,
                       response_formula, source_term)
from .solenoid import SolenoidState, solenoid_step, srb_expectation
from .transfer import (UlamMatrix, assemble_branch_transfer, assemble_transfer,
                       averaging_operator, invariant_density, kernel_min,
                       perturbed_operator)

__version__ = "0.1.0"

__all__ = [
    "MapParams", "PartitionSequences", "map_value", "map_derivative",
    "branch_inverse", "partition_sequences", "parameter_velocity",
    "pullback_velocity", "dalpha_branch_inverse",
    "NonuniformGrid", "GridDensity", "build_grid", "project",
    "lebesgue_integral",
    "UlamMatrix", "assemble_transfer", "assemble_branch_transfer",
    "invariant_density", "averaging_operator", "perturbed_operator",
    "kernel_min",
    "SolverConfig", "ResponseReport", "source_term", "neumann_sum",
    "response_formula", "fd_derivative",
    "DecayFit", "correlation_sequence", "fit_decay",
    "SolenoidState", "solenoid_step", "srb_expectation",
    "ExperimentConfig", "load_config",
    "__version__",
]
