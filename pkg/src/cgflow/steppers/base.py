from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..multipliers import NewtonConfig


class NumericalBlowup(FloatingPointError):
    """A field or scalar went non-finite during a step."""


class BootstrapMissing(ValueError):
    """A multistep scheme was asked to step without its previous level."""


@dataclass(frozen=True)
class StabilizationParams:
    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self):
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("stabilization constants must be non-negative")


@dataclass(frozen=True)
class SchemeState:
    """Rolling solver state.

    ``phi`` is one field, or a stacked ``(m, ...)`` array for partitions.
    ``energy`` is the scheme's own (modified or discrete) energy at the
    current level, carried along so each step can report its increment.
    """

    phi: np.ndarray
    dt: float
    phi_prev: np.ndarray | None = None
    r: float | None = None
    r_prev: float | None = None
    step: int = 0
    t: float = 0.0
    H0: Any = None
    A0: float | None = None
    lam: Any = None
    energy: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.r is not None and not self.r > 0:
            raise ValueError("SAV variable r must be positive")

    def advanced(self, phi, **changes) -> "SchemeState":
        return replace(
            self,
            phi=phi,
            phi_prev=self.phi,
            r_prev=self.r,
            step=self.step + 1,
            t=(self.step + 1) * self.dt,
            **changes,
        )


@dataclass
class StepReport:
    lam: Any = 0.0
    eta: float | None = None
    gamma: float | None = None
    newton_iters: int = 0
    energy_original: float = float("nan")
    energy_discrete: float = float("nan")
    constraint_residuals: dict[str, float] = field(default_factory=dict)
    dissipation: float = 0.0
    dissipation_residual: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    def check_finite(self):
        vals = [self.energy_original, self.energy_discrete, *self.constraint_residuals.values()]
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(lam))):
            raise NumericalBlowup("non-finite energy, constraint or multiplier in step report")


def ensure_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalBlowup("non-finite values in field")


def multiplier_config() -> NewtonConfig:
    return NewtonConfig()


def constraint_tol(target) -> float:
    """Absolute multiplier tolerance tied to the constraint's scale."""
    return 1e-12 * (1.0 + float(np.max(np.abs(np.atleast_1d(target)))))
