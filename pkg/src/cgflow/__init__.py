"""Constraint-preserving SAV and Lagrange-multiplier schemes for gradient flows.

Subpackages and modules:

* :mod:`cgflow.spectral` -- periodic Fourier grid and constant-coefficient solves.
* :mod:`cgflow.models` -- energies, constraints and variational derivatives.
* :mod:`cgflow.multipliers` -- scalar and 2x2 Newton solves for the multipliers.
* :mod:`cgflow.steppers` -- one-step maps for every scheme.
* :mod:`cgflow.diagnostics`, :mod:`cgflow.studies` -- series, errors, order fits.
* :mod:`cgflow.config`, :mod:`cgflow.runner`, :mod:`cgflow.io`, :mod:`cgflow.cli` -- runs and files.
"""

from .config import ConfigError, RunConfig, parse_config, serialize_config
from .diagnostics import ConvergenceReport, TimeSeries, audit_monotonicity, fit_order, linf_error
from .initial import builtin_initial_condition
from .models import PartitionModel, VesicleModel, generic_model
from .multipliers import MultiplierFailure
from .runner import prepare, run, simulate
from .spectral import Grid
from .studies import compare_approaches, run_convergence_study

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceReport",
    "Grid",
    "MultiplierFailure",
    "PartitionModel",
    "RunConfig",
    "TimeSeries",
    "VesicleModel",
    "audit_monotonicity",
    "builtin_initial_condition",
    "compare_approaches",
    "fit_order",
    "generic_model",
    "linf_error",
    "parse_config",
    "prepare",
    "run",
    "run_convergence_study",
    "serialize_config",
    "simulate",
]
