"""Time-series accounting, error norms, order fits and energy audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import GridMismatchError

__all__ = [
    "TimeSeries",
    "ConvergenceReport",
    "linf_error",
    "fit_order",
    "audit_monotonicity",
    "ERROR_FLOOR",
]

ERROR_FLOOR = 1e-12


class TimeSeries:
    """Named, equal-length real columns with a strictly increasing ``t``.

    One row per recorded step; the values at ``t = 0`` are kept separately
    in :attr:`initial` so a run of ``n`` steps has ``n`` rows.
    """

    def __init__(self, columns, initial: dict | None = None):
        columns = list(columns)
        if not columns or columns[0] != "t":
            raise ValueError("first column must be 't'")
        if len(set(columns)) != len(columns):
            raise ValueError("duplicate column names")
        self._data = {c: [] for c in columns}
        self.initial = dict(initial or {})

    @property
    def columns(self) -> list[str]:
        return list(self._data)

    def __len__(self) -> int:
        return len(self._data["t"])

    def append(self, row: dict) -> None:
        unknown = set(row) - set(self._data)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        t = float(row["t"])
        ts = self._data["t"]
        if ts and not t > ts[-1]:
            raise ValueError(f"t must increase strictly: {t!r} after {ts[-1]!r}")
        for c, col in self._data.items():
            col.append(row.get(c, math.nan))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self._data[name], dtype=float)

    def row(self, i: int) -> dict:
        return {c: col[i] for c, col in self._data.items()}

    def rows(self):
        for i in range(len(self)):
            yield self.row(i)


@dataclass
class ConvergenceReport:
    """Errors against a reference run and the fitted log-log slope.

    ``used[i]`` is False for points within ``10 * floor`` of the error floor;
    ``status`` is ``"floor"`` when fewer than two points remain.
    """

    dts: list[float]
    errors: list[float]
    observed_order: float
    floor: float = 0.0
    used: list[bool] = field(default_factory=list)
    status: str = "ok"
    reference_dt: float | None = None

    def __post_init__(self):
        if len(self.dts) != len(self.errors):
            raise ValueError("dts and errors differ in length")
        if any(b >= a for a, b in zip(self.dts, self.dts[1:])):
            raise ValueError("dts must be strictly decreasing")
        if any(not e >= 0 for e in self.errors):
            raise ValueError("errors must be non-negative")

    def ratios(self) -> list[float]:
        """Error reduction factor between consecutive step sizes."""
        return [a / b if b > 0 else math.inf for a, b in zip(self.errors, self.errors[1:])]


def linf_error(f, g) -> float:
    """``max |f - g|`` over all points (and components for stacked fields)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise GridMismatchError(f"fields live on different grids: {f.shape} vs {g.shape}")
    return float(np.max(np.abs(f - g))) if f.size else 0.0


def fit_order(dts, errors, floor: float = 0.0) -> tuple[float, list[bool]]:
    """Least-squares slope of ``log(error)`` against ``log(dt)``.

    Points with ``error <= 10 * floor`` are excluded. Returns ``nan`` when
    fewer than two points remain.
    """
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    used = [bool(e > 10.0 * floor and e > 0) for e in errors]
    mask = np.array(used, dtype=bool)
    if mask.sum() < 2:
        return math.nan, used
    slope = np.polyfit(np.log(dts[mask]), np.log(errors[mask]), 1)[0]
    return float(slope), used


def audit_monotonicity(series: TimeSeries, column: str = "E_discrete", tol: float = 1e-8) -> list[tuple[int, float]]:
    """Steps where ``column`` grows by more than ``tol * (1 + |E|)``.

    The first row is compared with ``series.initial[column]`` when present.
    Returns ``(row index, relative increase)`` pairs; empty means monotone.
    """
    vals = list(series.column(column))
    prev = series.initial.get(column)
    out = []
    for i, v in enumerate(vals):
        if prev is not None and math.isfinite(prev):
            rel = (v - prev) / (1.0 + abs(prev))
            if rel > tol:
                out.append((i, rel))
        prev = v
    return out
