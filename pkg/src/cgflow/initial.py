"""Built-in initial conditions."""

from __future__ import annotations

import math

import numpy as np

from .spectral import Grid

__all__ = [
    "INITIAL_CONDITIONS",
    "builtin_initial_condition",
    "constant",
    "two_circles_2d",
    "four_spheres_3d",
    "six_spheres_3d",
    "smooth_trig",
    "partition_markers",
    "random_smooth",
]


def _tanh_union(grid: Grid, centers, radii, epsilon: float, offset: float):
    if len(centers) != len(radii):
        raise ValueError(f"{len(centers)} centers but {len(radii)} radii")
    X = grid.coords()
    out = np.full(grid.shape, float(offset))
    for c, r in zip(centers, radii):
        if len(c) != grid.dims:
            raise ValueError(f"center {tuple(c)} does not have {grid.dims} coordinates")
        dist = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(X, c)))
        out += np.tanh((r - dist) / (math.sqrt(2.0) * epsilon))
    return out


def constant(grid: Grid, value: float = 0.0):
    return np.full(grid.shape, float(value))


def two_circles_2d(
    grid: Grid,
    epsilon: float,
    radii=(0.28 * math.pi, 0.28 * math.pi),
    centers=((0.0, 0.35 * math.pi), (0.0, -0.35 * math.pi)),
):
    """``sum_i tanh((r_i - |x - c_i|) / (sqrt(2) eps)) + 1``: two phase-``+1`` discs."""
    if grid.dims != 2:
        raise ValueError("two_circles_2d needs a 2D grid")
    return _tanh_union(grid, centers, radii, epsilon, 1.0)


def _spheres(grid, epsilon, radii, centers, count):
    if grid.dims != 3:
        raise ValueError(f"{count}-sphere configuration needs a 3D grid")
    if len(radii) != count or len(centers) != count:
        raise ValueError(f"expected {count} radii and {count} centers")
    return _tanh_union(grid, centers, radii, epsilon, count - 1.0)


_P = math.pi
_FOUR = dict(
    radii=(_P / 6,) * 4,
    centers=tuple((0.0, y, 0.0) for y in (_P / 4, -_P / 4, 3 * _P / 4, -3 * _P / 4)),
)

_SIX = dict(
    radii=(_P / 6,) * 6,
    centers=tuple(
        (x, y, 0.0)
        for x, y in zip(
            (-_P / 4, _P / 4, 0.0, _P / 2, -_P / 2, 0.0),
            (-_P / 4, -_P / 4, _P / 4, _P / 4, _P / 4, -3 * _P / 4),
        )
    ),
)


def four_spheres_3d(grid: Grid, epsilon: float, radii=_FOUR["radii"], centers=_FOUR["centers"]):
    """Four tanh spheres with offset ``+3`` (value ``-1`` far from all of them)."""
    return _spheres(grid, epsilon, radii, centers, 4)


def six_spheres_3d(grid: Grid, epsilon: float, radii=_SIX["radii"], centers=_SIX["centers"]):
    """Six tanh spheres with offset ``+5``."""
    return _spheres(grid, epsilon, radii, centers, 6)


def smooth_trig(grid: Grid, t: float = 0.0, amplitude: float = 0.25, mean: float = 0.48):
    """``(amplitude sin(2x) cos(2y) + mean)(1 - sin(t)^2 / 2)``; ``y`` terms drop in 1D."""
    X = grid.coords()
    wave = np.sin(2.0 * X[0])
    if grid.dims > 1:
        wave = wave * np.cos(2.0 * X[1])
    return (amplitude * wave + mean) * (1.0 - 0.5 * math.sin(t) ** 2)


def _periodic_voronoi(grid: Grid, points):
    X = grid.coords()
    best = np.full(grid.shape, np.inf)
    label = np.zeros(grid.shape, dtype=int)
    two_pi = 2.0 * math.pi
    for j, p in enumerate(points):
        d2 = np.zeros(grid.shape)
        for x, pi in zip(X, p):
            dx = np.abs(x - pi) % two_pi
            dx = np.minimum(dx, two_pi - dx)
            d2 += dx * dx
        closer = d2 < best
        best = np.where(closer, d2, best)
        label = np.where(closer, j, label)
    return label


def partition_markers(grid: Grid, m: int = 4, seed: int = 0, points=None):
    """``m`` unit-norm indicator fields of a periodic Voronoi tessellation.

    Without explicit ``points`` and with ``m = 4`` the sites form a slightly
    sheared 2 x 2 lattice, giving four quadrilateral cells; other ``m`` draw
    sites uniformly with ``seed``.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if points is None:
        if m == 4 and grid.dims == 2:
            h = 0.5 * math.pi
            points = [(-h, -h + 0.3), (h, -h), (-h + 0.2, h), (h + 0.25, h + 0.15)]
        else:
            rng = np.random.default_rng(seed)
            points = rng.uniform(-math.pi, math.pi, size=(m, grid.dims))
    points = np.asarray(points, dtype=float)
    if points.shape != (m, grid.dims):
        raise ValueError(f"expected {m} sites with {grid.dims} coordinates, got shape {points.shape}")
    label = _periodic_voronoi(grid, points)
    out = np.zeros((m,) + grid.shape)
    for j in range(m):
        chi = (label == j).astype(float)
        norm = math.sqrt(grid.inner(chi, chi))
        if norm == 0.0:
            raise ValueError(f"cell {j} contains no grid points; refine the grid")
        out[j] = chi / norm
    return out


def random_smooth(
    grid: Grid,
    seed: int = 0,
    amplitude: float = 0.5,
    mean: float = 0.0,
    kmax: float = 4.0,
    components: int = 0,
):
    """Random trigonometric field with wavenumbers ``|k| <= kmax``.

    The field is rescaled so its deviation from ``mean`` peaks at
    ``amplitude``. ``kmax`` at the grid's Nyquist number gives rough data.
    ``components > 0`` returns that many independent fields stacked.
    """
    rng = np.random.default_rng(seed)
    count = max(1, int(components))
    mask = grid.ksq <= kmax * kmax
    out = np.empty((count,) + grid.shape)
    for j in range(count):
        coef = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
        f = grid.ifft(coef * mask)
        f = f - f.mean()
        peak = np.max(np.abs(f))
        out[j] = mean + (amplitude / peak * f if peak > 0 else f)
    return out if components else out[0]


INITIAL_CONDITIONS = {
    "constant": constant,
    "two_circles_2d": two_circles_2d,
    "four_spheres_3d": four_spheres_3d,
    "six_spheres_3d": six_spheres_3d,
    "smooth_trig": smooth_trig,
    "partition_markers": partition_markers,
    "random_smooth": random_smooth,
}


def builtin_initial_condition(name: str, params: dict, grid: Grid):
    """Evaluate a named initial condition with keyword ``params``."""
    try:
        fn = INITIAL_CONDITIONS[name]
    except KeyError:
        raise ValueError(f"unknown initial condition {name!r}; choose from {sorted(INITIAL_CONDITIONS)}") from None
    try:
        return fn(grid, **params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name}: {exc}") from None
