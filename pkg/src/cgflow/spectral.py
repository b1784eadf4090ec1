"""Fourier pseudo-spectral machinery on the periodic box [-pi, pi)^d.

Fields are plain ``numpy`` arrays of shape ``grid.shape`` (row-major, one value
per grid point). A :class:`Grid` owns the wavenumbers, the transforms and the
quadrature; a :class:`SpectralOperator` is a constant-coefficient operator
stored as its Fourier symbol in the real-to-complex (``rfftn``) layout.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralOperator",
    "GridMismatchError",
    "SingularOperatorError",
    "fft_workers",
]


class GridMismatchError(ValueError):
    """A field or operator does not live on the grid it is used with."""


class SingularOperatorError(ArithmeticError):
    """A constant-coefficient operator has a zero symbol at a forced mode."""

    def __init__(self, mode, wavenumber, value):
        self.mode = mode
        self.wavenumber = wavenumber
        self.value = value
        super().__init__(
            f"operator symbol vanishes at mode index {mode} "
            f"(wavenumber {wavenumber}, symbol {value!r}) while the right-hand "
            "side has content there"
        )


def fft_workers() -> int:
    """Worker count for the transforms, capped by ``CGFLOW_THREADS``."""
    raw = os.environ.get("CGFLOW_THREADS", "").strip()
    if not raw:
        return -1
    try:
        n = int(raw)
    except ValueError:
        return -1
    return max(1, n)


class Grid:
    """Uniform periodic grid with ``modes[i]`` points along axis ``i``.

    Parameters
    ----------
    modes : sequence of int
        Point counts per dimension; 1 to 3 entries, each even and >= 4.
    dealias : bool
        When set, :meth:`truncate` zeroes modes above 2/3 of the Nyquist
        wavenumber. Models call it on their nonlinear terms.
    """

    def __init__(self, modes: Sequence[int], dealias: bool = False):
        modes = tuple(int(n) for n in modes)
        if not 1 <= len(modes) <= 3:
            raise ValueError(f"grid must have 1, 2 or 3 dimensions, got {len(modes)}")
        for n in modes:
            if n < 4 or n % 2:
                raise ValueError(f"point counts must be even and >= 4, got {modes}")
        self.shape = modes
        self.dims = len(modes)
        self.dealias = bool(dealias)
        self.spacing = tuple(2.0 * math.pi / n for n in modes)
        self.cell_volume = math.prod(self.spacing)
        self.volume = (2.0 * math.pi) ** self.dims
        self.size = math.prod(modes)

        spectral_shape = modes[:-1] + (modes[-1] // 2 + 1,)
        self.spectral_shape = spectral_shape
        ks, kds = [], []
        for axis, n in enumerate(modes):
            if axis == self.dims - 1:
                k = np.arange(n // 2 + 1, dtype=float)
            else:
                k = np.fft.fftfreq(n, d=1.0 / n)
            kd = k.copy()
            # first derivatives drop the Nyquist mode so they stay real
            kd[np.abs(k) == n // 2] = 0.0
            bshape = [1] * self.dims
            bshape[axis] = k.size
            ks.append(k.reshape(bshape))
            kds.append(kd.reshape(bshape))
        self._k = tuple(ks)
        self._kd = tuple(kds)
        ksq = np.zeros(spectral_shape)
        for k in ks:
            ksq = ksq + k**2
        self.ksq = ksq
        ksq.setflags(write=False)

        keep = np.ones(spectral_shape, dtype=bool)
        for k, n in zip(ks, modes):
            keep = keep & (np.abs(k) <= (n // 2) * 2.0 / 3.0)
        self._dealias_mask = keep

    # -- identity -----------------------------------------------------------
    def __eq__(self, other):
        return isinstance(other, Grid) and self.shape == other.shape

    def __hash__(self):
        return hash(("Grid", self.shape))

    def __repr__(self):
        return f"Grid(modes={self.shape})"

    def check(self, f: np.ndarray) -> np.ndarray:
        """Return ``f`` as a float array, raising if its shape is wrong."""
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise GridMismatchError(f"field of shape {f.shape} on grid {self.shape}")
        return f

    # -- geometry -----------------------------------------------------------
    def axes(self) -> list[np.ndarray]:
        """1D coordinate vectors, ``x_j = -pi + j*h``."""
        return [-math.pi + h * np.arange(n) for h, n in zip(self.spacing, self.shape)]

    def coords(self) -> list[np.ndarray]:
        """Coordinate arrays broadcast to ``self.shape`` (``ij`` indexing)."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return self._k

    # -- transforms -----------------------------------------------------------
    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(self.check(f), workers=fft_workers())

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfftn(fh, s=self.shape, workers=fft_workers())

    def truncate(self, f: np.ndarray) -> np.ndarray:
        """2/3-rule filter when dealiasing is enabled, identity otherwise."""
        if not self.dealias:
            return f
        return self.ifft(self.fft(f) * self._dealias_mask)

    # -- quadrature -----------------------------------------------------------
    def integrate(self, f: np.ndarray) -> float:
        """Rectangle rule, exact for trigonometric polynomials below Nyquist."""
        return float(self.cell_volume * np.sum(self.check(f)))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(self.cell_volume * np.vdot(self.check(f), self.check(g)).real)

    def mean(self, f: np.ndarray) -> float:
        return float(np.mean(self.check(f)))

    def spectral_energy(self, f: np.ndarray) -> float:
        """``inner(f, f)`` computed from Fourier coefficients (Parseval)."""
        fh = self.fft(f)
        w = np.full(self.spectral_shape[-1], 2.0)
        w[0] = 1.0
        w[-1] = 1.0  # Nyquist column appears once (even N)
        total = np.sum(np.abs(fh) ** 2 * w)
        return float(self.cell_volume * total / self.size)

    # -- differential operators ---------------------------------------------
    def derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        return self.ifft(1j * self._kd[axis] * self.fft(f))

    def gradient(self, f: np.ndarray) -> list[np.ndarray]:
        fh = self.fft(f)
        return [self.ifft(1j * kd * fh) for kd in self._kd]

    def divergence(self, components: Sequence[np.ndarray]) -> np.ndarray:
        if len(components) != self.dims:
            raise GridMismatchError(
                f"expected {self.dims} vector components, got {len(components)}"
            )
        acc = np.zeros(self.spectral_shape, dtype=complex)
        for kd, c in zip(self._kd, components):
            acc += 1j * kd * self.fft(c)
        return self.ifft(acc)

    def div_grad(self, f: np.ndarray) -> np.ndarray:
        """``div(grad f)`` with the derivative symbols (no Nyquist mode).

        This is the exact adjoint partner of :meth:`gradient_squared` under the
        discrete inner product, unlike the Laplacian operator, whose symbol
        keeps the Nyquist wavenumber.
        """
        kd2 = np.zeros(self.spectral_shape)
        for kd in self._kd:
            kd2 = kd2 + kd**2
        return self.ifft(-kd2 * self.fft(f))

    def gradient_squared(self, f: np.ndarray) -> np.ndarray:
        return sum(g * g for g in self.gradient(f))

    # -- operators ----------------------------------------------------------
    def operator(self, symbol) -> "SpectralOperator":
        symbol = np.broadcast_to(np.asarray(symbol), self.spectral_shape).copy()
        return SpectralOperator(self, symbol)

    def identity(self) -> "SpectralOperator":
        return self.operator(np.ones(self.spectral_shape))

    def laplacian(self) -> "SpectralOperator":
        return self.operator(-self.ksq)

    def biharmonic(self) -> "SpectralOperator":
        return self.operator(self.ksq**2)

    def apply(self, op: "SpectralOperator", f: np.ndarray) -> np.ndarray:
        if op.grid != self:
            raise GridMismatchError(f"operator on {op.grid} applied on {self}")
        return self.ifft(op.symbol * self.fft(f))

    def solve(self, op: "SpectralOperator", rhs: np.ndarray) -> np.ndarray:
        """Invert ``op`` mode by mode.

        Modes where the symbol vanishes are left at zero if the right-hand
        side is empty there and raise :class:`SingularOperatorError` otherwise.
        """
        if op.grid != self:
            raise GridMismatchError(f"operator on {op.grid} applied on {self}")
        rh = self.fft(rhs)
        sym = op.symbol
        scale = float(np.max(np.abs(sym))) or 1.0
        zero = np.abs(sym) <= 1e-14 * scale
        if np.any(zero):
            rscale = float(np.max(np.abs(rh))) or 1.0
            bad = zero & (np.abs(rh) > 1e-12 * rscale)
            if np.any(bad):
                idx = tuple(int(i) for i in np.argwhere(bad)[0])
                kvec = tuple(float(k.reshape(-1)[i]) for k, i in zip(self._k, idx))
                raise SingularOperatorError(idx, kvec, complex(sym[idx]))
            safe = np.where(zero, 1.0, sym)
            uh = np.where(zero, 0.0, rh / safe)
        else:
            uh = rh / sym
        return self.ifft(uh)

    def solve_const_coeff(self, a: float, b: float, c: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(a + b*Laplacian + c*Bilaplacian) u = rhs`` exactly."""
        return self.solve(self.operator(a - b * self.ksq + c * self.ksq**2), rhs)


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Diagonal-in-Fourier operator; ``symbol`` has ``grid.spectral_shape``."""

    grid: Grid
    symbol: np.ndarray

    def __post_init__(self):
        if self.symbol.shape != self.grid.spectral_shape:
            raise GridMismatchError(
                f"symbol shape {self.symbol.shape} != {self.grid.spectral_shape}"
            )
        self.symbol.setflags(write=False)

    def __call__(self, f):
        return self.grid.apply(self, f)

    def _coerce(self, other):
        if isinstance(other, SpectralOperator):
            if other.grid != self.grid:
                raise GridMismatchError("operators live on different grids")
            return other.symbol
        return other

    def __add__(self, other):
        return SpectralOperator(self.grid, self.symbol + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SpectralOperator(self.grid, self.symbol - self._coerce(other))

    def __rsub__(self, other):
        return SpectralOperator(self.grid, self._coerce(other) - self.symbol)

    def __mul__(self, other):
        return SpectralOperator(self.grid, self.symbol * self._coerce(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self * other

    def __neg__(self):
        return SpectralOperator(self.grid, -self.symbol)

    @property
    def is_real(self) -> bool:
        return bool(np.all(np.imag(self.symbol) == 0))

    def min_real(self) -> float:
        return float(np.min(np.real(self.symbol)))
