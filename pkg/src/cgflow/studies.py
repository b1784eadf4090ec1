"""Multi-run studies: time-step convergence and approach comparison."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, RunConfig
from .diagnostics import ERROR_FLOOR, ConvergenceReport, TimeSeries, fit_order, linf_error
from .runner import simulate

__all__ = [
    "StudyAborted",
    "ComparisonBundle",
    "run_convergence_study",
    "compare_approaches",
    "approach_config",
]


class StudyAborted(RuntimeError):
    """A run inside a study failed; ``partial`` maps finished ``dt`` to error."""

    def __init__(self, message: str, partial: dict, failure: dict):
        super().__init__(message)
        self.partial = dict(partial)
        self.failure = failure


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_convergence_study(cfg: RunConfig, dts, ref_dt: float, *, workers: int = 1) -> ConvergenceReport:
    """Integrate to ``cfg.T`` at each ``dt`` and at ``ref_dt``; fit the L-infinity order.

    Points within ``10x`` of the floor ``1e-12 * max|reference|`` are left
    out of the fit. Raises :class:`StudyAborted` with the errors finished so
    far if any run fails numerically.
    """
    dts = sorted({float(d) for d in dts}, reverse=True)
    if len(dts) < 1:
        raise ValueError("need at least one dt")
    if not ref_dt < dts[-1]:
        raise ConfigError([f"ref_dt = {ref_dt!r} must be below min(dts) = {dts[-1]!r}"])
    configs = [cfg.with_changes(dt=d) for d in [*dts, ref_dt]]

    def final(c):
        return simulate(c.with_changes(series_stride=c.n_steps))

    results = _map(final, configs, workers)
    ref = results[-1]
    if not ref.ok:
        raise StudyAborted(f"reference run at dt={ref_dt!r} failed: {ref.failure['message']}", {}, ref.failure)
    ref_phi = ref.state.phi
    scale = float(np.max(np.abs(ref_phi))) or 1.0
    floor = ERROR_FLOOR * scale
    errors = {}
    for d, res in zip(dts, results):
        if not res.ok:
            raise StudyAborted(f"run at dt={d!r} failed: {res.failure['message']}", errors, res.failure)
        errors[d] = linf_error(res.state.phi, ref_phi)
    errs = [errors[d] for d in dts]
    order, used = fit_order(dts, errs, floor)
    status = "ok" if sum(used) >= 2 else "floor"
    return ConvergenceReport(dts, errs, order, floor, used, status, float(ref_dt))


def approach_config(cfg: RunConfig, approach) -> RunConfig:
    """Config running ``approach`` (1, 2, 3 or a generic scheme name) on ``cfg``'s problem."""
    if cfg.model == "vesicle":
        if approach not in (1, 2, 3):
            raise ConfigError([f"vesicle approaches are 1, 2 and 3, got {approach!r}"])
        return cfg.with_changes(approach=int(approach))
    if cfg.model == "generic":
        scheme = f"approach{approach}" if approach in (1, 2, 3) else str(approach)
        return cfg.with_changes(scheme=scheme, eps1=None, eps2=None)
    raise ConfigError([f"model={cfg.model} has a single scheme; nothing to compare"])


@dataclass
class ComparisonBundle:
    """Time series per approach plus pairwise multiplier discrepancies.

    Failed runs keep their partial series and a ``failures`` entry.
    Discrepancies use the common prefix of the two series.
    """

    series: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    lambda_discrepancy: dict = field(default_factory=dict)
    lambda_scale: float = 0.0
    constraint_drift: dict = field(default_factory=dict)

    def relative_discrepancy(self, a, b) -> float:
        d = self.lambda_discrepancy[(a, b)] if (a, b) in self.lambda_discrepancy else self.lambda_discrepancy[(b, a)]
        return d / self.lambda_scale if self.lambda_scale > 0 else d


def _lambda_matrix(s: TimeSeries) -> np.ndarray:
    cols = [c for c in s.columns if c == "lambda" or c.startswith("lambda_")]
    return np.stack([s.column(c) for c in cols], axis=-1)


def compare_approaches(cfg: RunConfig, approaches, *, workers: int = 1) -> ComparisonBundle:
    """Run the same problem with each approach and compare the ``lambda`` traces."""
    approaches = list(approaches)
    configs = [approach_config(cfg, a) for a in approaches]
    results = _map(simulate, configs, workers)
    bundle = ComparisonBundle()
    scale = 0.0
    for a, res in zip(approaches, results):
        bundle.series[a] = res.series
        if not res.ok:
            bundle.failures[a] = res.failure
        drift_cols = [c for c in res.series.columns if c.endswith("_drift")]
        bundle.constraint_drift[a] = {
            c: float(np.max(np.abs(res.series.column(c)))) if len(res.series) else 0.0 for c in drift_cols
        }
        if len(res.series):
            scale = max(scale, float(np.max(np.abs(_lambda_matrix(res.series)))))
    bundle.lambda_scale = scale
    for a, b in itertools.combinations(approaches, 2):
        sa, sb = bundle.series[a], bundle.series[b]
        n = min(len(sa), len(sb))
        if n == 0:
            continue
        la, lb = _lambda_matrix(sa)[:n], _lambda_matrix(sb)[:n]
        bundle.lambda_discrepancy[(a, b)] = float(np.max(np.abs(la - lb)))
    return bundle
