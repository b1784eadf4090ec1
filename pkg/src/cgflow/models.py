"""Energy functionals, constraints and variational derivatives.

Three problem families are provided:

* :class:`GenericModel` -- ``E = 1/2 (L phi, phi) + int F(phi)`` under a single
  constraint ``H(phi) = const``, relaxed by a mobility operator ``G``.
* :class:`VesicleModel` -- phase-field bending energy with volume and surface
  area constraints.
* :class:`PartitionModel` -- ``m`` components with pairwise repulsion and one
  unit-norm constraint per component.

All derivatives are exact gradients of the discrete functionals (rectangle-rule
quadrature, spectral derivatives), which is what the Gateaux tests check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import Grid, GridMismatchError, SpectralOperator

__all__ = [
    "double_well",
    "double_well_prime",
    "Constraint",
    "MassConstraint",
    "NormConstraint",
    "InterfaceAreaConstraint",
    "GenericModel",
    "generic_model",
    "VesicleModel",
    "PartitionModel",
    "NegativeSAVError",
]


class NegativeSAVError(ValueError):
    """``int F + C0`` became non-positive, so the SAV square root is undefined."""


def double_well(phi):
    return 0.25 * (phi * phi - 1.0) ** 2


def double_well_prime(phi):
    return phi * phi * phi - phi


def _zero(phi):
    return np.zeros_like(phi)


# ---------------------------------------------------------------------------
# constraints


class Constraint:
    """A global functional ``H(phi)`` with its discrete variational derivative."""

    name = "abstract"

    def __init__(self, grid: Grid):
        self.grid = grid

    def value(self, phi) -> float:
        raise NotImplementedError

    def derivative(self, phi) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, phi) -> float:
        return self.value(phi)


class MassConstraint(Constraint):
    """``H = int phi``."""

    name = "mass"

    def value(self, phi):
        return self.grid.integrate(phi)

    def derivative(self, phi):
        return np.ones(self.grid.shape)


class NormConstraint(Constraint):
    """``H = int phi^2``."""

    name = "norm"

    def value(self, phi):
        return self.grid.inner(phi, phi)

    def derivative(self, phi):
        return 2.0 * np.asarray(phi, dtype=float)


class InterfaceAreaConstraint(Constraint):
    """Ginzburg-Landau surface area ``int eps/2 |grad phi|^2 + F(phi)/eps``."""

    name = "area"

    def __init__(self, grid: Grid, epsilon: float):
        super().__init__(grid)
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.epsilon = float(epsilon)

    def value(self, phi):
        eps = self.epsilon
        g = self.grid
        return g.integrate(0.5 * eps * g.gradient_squared(phi) + double_well(phi) / eps)

    def derivative(self, phi):
        eps = self.epsilon
        return -eps * self.grid.div_grad(phi) + self.grid.truncate(double_well_prime(phi)) / eps


# ---------------------------------------------------------------------------
# generic single-constraint model


@dataclass(frozen=True, eq=False)
class GenericModel:
    """``E(phi) = 1/2 (L phi, phi) + int F(phi)`` with one global constraint.

    ``constraint=None`` gives the unconstrained flow (the multiplier is
    pinned at zero by the steppers).
    """

    grid: Grid
    linear_op: SpectralOperator
    mobility_op: SpectralOperator
    potential: Callable = double_well
    potential_prime: Callable = double_well_prime
    constraint: Constraint | None = None
    C0: float = 1.0
    name: str = "generic"

    def __post_init__(self):
        for label, op in (("linear_op", self.linear_op), ("mobility_op", self.mobility_op)):
            if op.grid != self.grid:
                raise GridMismatchError(f"{label} lives on another grid")
            if not op.is_real or op.min_real() < 0:
                raise ValueError(f"{label} must have a real non-negative symbol")
        if self.C0 <= 0:
            raise ValueError("C0 must be positive")

    def apply_L(self, phi):
        return self.grid.apply(self.linear_op, phi)

    def apply_G(self, f):
        return self.grid.apply(self.mobility_op, f)

    def F_prime(self, phi):
        return self.grid.truncate(self.potential_prime(phi))

    def nonlinear_energy(self, phi) -> float:
        return self.grid.integrate(self.potential(phi))

    def quadratic_energy(self, phi) -> float:
        return 0.5 * self.grid.inner(self.apply_L(phi), phi)

    def energy(self, phi) -> float:
        return self.quadratic_energy(phi) + self.nonlinear_energy(phi)

    def sav_shift(self, phi) -> float:
        """``int F(phi) + C0``, guarded against non-positive values."""
        val = self.nonlinear_energy(phi) + self.C0
        if not val > 0:
            raise NegativeSAVError(
                f"int F + C0 = {val!r} <= 0; increase C0 (currently {self.C0})"
            )
        return val

    def sav_variable(self, phi) -> float:
        return math.sqrt(self.sav_shift(phi))

    def modified_energy(self, phi, r: float) -> float:
        return self.quadratic_energy(phi) + r * r

    def constraint_value(self, phi) -> float:
        return 0.0 if self.constraint is None else self.constraint.value(phi)

    def constraint_derivative(self, phi):
        if self.constraint is None:
            return np.zeros(self.grid.shape)
        return self.constraint.derivative(phi)


def generic_model(
    grid: Grid,
    mobility: str = "allen-cahn",
    M: float = 1.0,
    kappa: float = 1.0,
    epsilon: float = 1.0,
    potential: str = "double_well",
    constraint: str | None = "mass",
    C0: float = 1.0,
) -> GenericModel:
    """Build a :class:`GenericModel` from named presets.

    ``L = -kappa * Laplacian``; ``F = double_well / epsilon^2`` or ``0``;
    mobility ``allen-cahn`` is ``M*I`` and ``cahn-hilliard`` is ``-M*Laplacian``.
    """
    if M <= 0 or kappa < 0 or epsilon <= 0:
        raise ValueError("need M > 0, kappa >= 0, epsilon > 0")
    L = -kappa * grid.laplacian()
    if mobility == "allen-cahn":
        G = M * grid.identity()
    elif mobility == "cahn-hilliard":
        G = -M * grid.laplacian()
    else:
        raise ValueError(f"unknown mobility {mobility!r}")

    if potential == "double_well":
        s = 1.0 / epsilon**2
        F = lambda phi: s * double_well(phi)  # noqa: E731
        dF = lambda phi: s * double_well_prime(phi)  # noqa: E731
    elif potential == "zero":
        F = lambda phi: np.zeros_like(phi)  # noqa: E731
        dF = _zero
    else:
        raise ValueError(f"unknown potential {potential!r}")

    if constraint in (None, "none"):
        con = None
    elif constraint == "mass":
        con = MassConstraint(grid)
    elif constraint == "norm":
        con = NormConstraint(grid)
    elif constraint == "area":
        con = InterfaceAreaConstraint(grid, epsilon)
    else:
        raise ValueError(f"unknown constraint {constraint!r}")
    return GenericModel(grid, L, G, F, dF, con, C0)


# ---------------------------------------------------------------------------
# vesicle membrane


@dataclass(frozen=True, eq=False)
class VesicleModel:
    """Bending energy ``eps/2 int w^2``, ``w = -Lap phi + G(phi)/eps^2``.

    ``C0`` is the shift for the SAV variable ``sqrt(int Q + C0)`` used by the
    first-approach scheme; ``None`` lets the stepper pick one from the
    conserved surface area.
    """

    grid: Grid
    epsilon: float
    M: float = 1.0
    C0: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.M > 0:
            raise ValueError("mobility M must be positive")

    def chemical_w(self, phi):
        g = self.grid
        return -g.apply(g.laplacian(), phi) + double_well_prime(phi) / self.epsilon**2

    def bending_energy(self, phi) -> float:
        w = self.chemical_w(phi)
        return 0.5 * self.epsilon * self.grid.inner(w, w)

    def energy(self, phi) -> float:
        """Alias of :meth:`bending_energy`, the model's free energy."""
        return self.bending_energy(phi)

    def biharmonic_energy(self, phi) -> float:
        """``eps/2 ||Lap phi||^2``, the part treated implicitly."""
        lap = self.grid.apply(self.grid.laplacian(), phi)
        return 0.5 * self.epsilon * self.grid.inner(lap, lap)

    def Q_density(self, phi):
        eps = self.epsilon
        gsq = self.grid.gradient_squared(phi)
        G = double_well_prime(phi)
        return 0.5 * eps * (
            6.0 / eps**2 * phi * phi * gsq + G * G / eps**4 - 2.0 / eps**2 * gsq
        )

    def Q_energy(self, phi) -> float:
        return self.grid.integrate(self.Q_density(phi))

    def dQ_dphi(self, phi):
        eps = self.epsilon
        g = self.grid
        grad = g.gradient(phi)
        gsq = sum(c * c for c in grad)
        flux = g.divergence([phi * phi * c for c in grad])
        G = double_well_prime(phi)
        dG = 3.0 * phi * phi - 1.0
        out = 0.5 * eps * (
            12.0 / eps**2 * phi * gsq
            - 12.0 / eps**2 * flux
            + 2.0 / eps**4 * G * dG
            + 4.0 / eps**2 * g.div_grad(phi)
        )
        return g.truncate(out)

    def volume(self, phi) -> float:
        return self.grid.integrate(phi)

    def area(self, phi) -> float:
        eps = self.epsilon
        g = self.grid
        return g.integrate(0.5 * eps * g.gradient_squared(phi) + double_well(phi) / eps)

    def constraints(self, phi) -> tuple[float, float]:
        """``(A, H)``: enclosed volume and surface area."""
        return self.volume(phi), self.area(phi)

    def dH_dphi(self, phi):
        eps = self.epsilon
        g = self.grid
        return -eps * g.div_grad(phi) + g.truncate(double_well_prime(phi)) / eps


# ---------------------------------------------------------------------------
# optimal partition


@dataclass(frozen=True, eq=False)
class PartitionModel:
    """``m`` components, energy ``int 1/2 sum |grad phi_j|^2 + F(phi)``,
    ``F = eps^-2 sum_{i>j} phi_i^2 phi_j^2``, unit L2 norm per component.

    Components are stacked along axis 0 (shape ``(m, *grid.shape)``) and
    indexed from 0. The mobility is fixed to one.
    """

    grid: Grid
    m: int
    epsilon: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("component count m must be a positive integer")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def stack(self, phis) -> np.ndarray:
        arr = np.asarray(phis, dtype=float)
        if arr.shape != (self.m,) + self.grid.shape:
            raise GridMismatchError(
                f"expected {self.m} components on {self.grid.shape}, got shape {arr.shape}"
            )
        return arr

    def interaction_density(self, phis):
        sq = self.stack(phis) ** 2
        total = sq.sum(axis=0)
        # sum_{i>j} a_i a_j = ((sum a)^2 - sum a^2) / 2
        return 0.5 * (total * total - (sq * sq).sum(axis=0)) / self.epsilon**2

    def interaction(self, phis) -> float:
        return self.grid.integrate(self.interaction_density(phis))

    def dF_dphi(self, phis, j: int):
        arr = self.stack(phis)
        if not 0 <= j < self.m:
            raise IndexError(f"component index {j} outside 0..{self.m - 1}")
        sq = arr**2
        others = sq.sum(axis=0) - sq[j]
        return self.grid.truncate(2.0 / self.epsilon**2 * arr[j] * others)

    def dF_all(self, phis) -> np.ndarray:
        arr = self.stack(phis)
        sq = arr**2
        total = sq.sum(axis=0)
        out = 2.0 / self.epsilon**2 * arr * (total - sq)
        if self.grid.dealias:
            out = np.stack([self.grid.truncate(o) for o in out])
        return out

    def gradient_energy(self, phis) -> float:
        """``1/2 sum_j (-Lap phi_j, phi_j)`` with the scheme's Laplacian symbol."""
        arr = self.stack(phis)
        g = self.grid
        lap = g.laplacian()
        return 0.5 * sum(-g.inner(g.apply(lap, p), p) for p in arr)

    def energy(self, phis) -> float:
        return self.gradient_energy(phis) + self.interaction(phis)

    def norms(self, phis) -> np.ndarray:
        arr = self.stack(phis)
        return np.array([self.grid.inner(p, p) for p in arr])
