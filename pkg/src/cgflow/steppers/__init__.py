"""Time steppers. Each ``step_*`` maps ``(state, model) -> (state, report)``."""

from __future__ import annotations

from functools import partial

from .base import (
    BootstrapMissing,
    NumericalBlowup,
    SchemeState,
    StabilizationParams,
    StepReport,
)
from .generic import (
    initial_generic_state,
    lambda_predictor_linear_sav,
    stabilized_energy,
    step_approach1,
    step_approach2_cn,
    step_approach3_cn,
    step_linear_sav,
    step_sav_unconstrained,
    step_stabilized_cn,
)
from .partition import initial_partition_state, partition_bdf2_energy, step_partition_bdf2
from .vesicle import initial_vesicle_state, step_vesicle_bdf2, vesicle_bdf2_energy

__all__ = [
    "BootstrapMissing",
    "NumericalBlowup",
    "SchemeState",
    "StabilizationParams",
    "StepReport",
    "SCHEMES",
    "bootstrap_first_step",
    "initial_state",
    "make_stepper",
    "initial_generic_state",
    "initial_partition_state",
    "initial_vesicle_state",
    "lambda_predictor_linear_sav",
    "partition_bdf2_energy",
    "stabilized_energy",
    "step_approach1",
    "step_approach2_cn",
    "step_approach3_cn",
    "step_linear_sav",
    "step_partition_bdf2",
    "step_sav_unconstrained",
    "step_stabilized_cn",
    "step_vesicle_bdf2",
    "vesicle_bdf2_energy",
]

# scheme name -> (model family, uses SAV variable)
SCHEMES = {
    "linear_sav": ("generic", True),
    "approach1": ("generic", True),
    "approach2": ("generic", False),
    "approach3": ("generic", False),
    "stabilized": ("generic", False),
    "vesicle_bdf2": ("vesicle", None),
    "partition_bdf2": ("partition", False),
}

_MULTISTEP = {"approach2", "approach3", "stabilized", "vesicle_bdf2", "partition_bdf2"}


def make_stepper(
    scheme: str,
    *,
    approach: int = 3,
    stab: StabilizationParams | None = None,
    on_fold: str = "minimize",
):
    """Return ``step(state, model) -> (state, report)`` for a scheme name.

    ``on_fold`` applies to schemes that solve a scalar energy balance for
    ``eta`` (see :func:`~cgflow.multipliers.solve_balance_multiplier`).
    """
    if on_fold not in ("minimize", "raise"):
        raise ValueError(f"on_fold must be 'minimize' or 'raise', got {on_fold!r}")
    if scheme == "linear_sav":
        return step_linear_sav
    if scheme == "approach1":
        return step_approach1
    if scheme == "approach2":
        return partial(step_approach2_cn, on_fold=on_fold)
    if scheme == "approach3":
        return partial(step_approach3_cn, on_fold=on_fold)
    if scheme == "stabilized":
        return partial(step_stabilized_cn, stab=stab or StabilizationParams(), on_fold=on_fold)
    if scheme == "vesicle_bdf2":
        return partial(step_vesicle_bdf2, approach=approach, on_fold=on_fold)
    if scheme == "partition_bdf2":
        return partial(step_partition_bdf2, on_fold=on_fold)
    raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")


def initial_state(scheme: str, model, phi0, dt: float, *, approach: int = 3) -> SchemeState:
    """Build the ``t = 0`` state matching ``scheme``."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    family, sav = SCHEMES[scheme]
    if family == "generic":
        return initial_generic_state(model, phi0, dt, sav=sav)
    if family == "vesicle":
        return initial_vesicle_state(model, phi0, dt, approach=approach)
    return initial_partition_state(model, phi0, dt)


def bootstrap_first_step(state: SchemeState, model, scheme: str, **kwargs):
    """Produce level one for a multistep scheme.

    The multistep steppers already start themselves when ``phi_prev`` is
    absent: BDF2 falls back to backward Euler with lagged forces, and
    Crank-Nicolson lags its extrapolants to ``phi^0``. This wrapper checks the
    precondition and records ``phi^0`` as the previous level.
    """
    if state.step != 0 or state.phi_prev is not None:
        raise BootstrapMissing("bootstrap is only valid at step 0 without a previous level")
    return make_stepper(scheme, **kwargs)(state, model)
