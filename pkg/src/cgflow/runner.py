"""Run orchestration: build a run from a :class:`RunConfig`, step it, record it."""

from __future__ import annotations

import inspect
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ConfigError, RunConfig, serialize_config
from .diagnostics import TimeSeries
from .initial import INITIAL_CONDITIONS, builtin_initial_condition
from .io import CsvSeriesWriter, write_snapshot
from .models import NegativeSAVError, PartitionModel, VesicleModel, generic_model
from .multipliers import DegeneratePredictorError, MultiplierFailure
from .spectral import Grid, SingularOperatorError
from .steppers import SchemeState, StabilizationParams, StepReport, initial_state, make_stepper

__all__ = [
    "EXIT_OK",
    "EXIT_NUMERICAL",
    "EXIT_CONFIG",
    "NUMERICAL_ERRORS",
    "PreparedRun",
    "SimulationResult",
    "prepare",
    "simulate",
    "run",
    "series_columns",
]

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2

# raised mid-run by the steppers; anything else is a bug
NUMERICAL_ERRORS = (
    MultiplierFailure,
    DegeneratePredictorError,
    NegativeSAVError,
    FloatingPointError,
    SingularOperatorError,
)


@dataclass
class PreparedRun:
    config: RunConfig
    grid: Grid
    model: object
    phi0: np.ndarray
    state: SchemeState
    step: Callable


def _build_model(cfg: RunConfig, grid: Grid):
    if cfg.model == "generic":
        return generic_model(
            grid,
            mobility=cfg.mobility or "allen-cahn",
            M=1.0 if cfg.M is None else cfg.M,
            kappa=1.0 if cfg.kappa is None else cfg.kappa,
            epsilon=cfg.eps,
            potential=cfg.potential or "double_well",
            constraint=cfg.constraint or "mass",
            C0=1.0 if cfg.C0 is None else cfg.C0,
        )
    if cfg.model == "vesicle":
        return VesicleModel(grid, cfg.eps, 1.0 if cfg.M is None else cfg.M, cfg.C0)
    return PartitionModel(grid, 4 if cfg.m is None else cfg.m, cfg.eps)


def _ic_params(cfg: RunConfig, model) -> dict:
    accepted = inspect.signature(INITIAL_CONDITIONS[cfg.ic]).parameters
    params = dict(cfg.ic_params)
    if "epsilon" in accepted and "epsilon" not in params:
        params["epsilon"] = cfg.eps
    if "m" in accepted and "m" not in params and isinstance(model, PartitionModel):
        params["m"] = model.m
    if cfg.seed is not None:
        params["seed"] = cfg.seed
    return params


def prepare(cfg: RunConfig) -> PreparedRun:
    """Build grid, model, initial data and ``t = 0`` state.

    Every failure here is a configuration problem and raises
    :class:`ConfigError`, so nothing config-related can fail once stepping
    starts.
    """
    try:
        grid = Grid(cfg.modes)
        model = _build_model(cfg, grid)
        phi0 = np.asarray(builtin_initial_condition(cfg.ic, _ic_params(cfg, model), grid), dtype=float)
        want = (model.m, *grid.shape) if isinstance(model, PartitionModel) else grid.shape
        if phi0.shape != want:
            raise ValueError(f"initial condition {cfg.ic} has shape {phi0.shape}, model {cfg.model} needs {want}")
        if not np.all(np.isfinite(phi0)):
            raise ValueError(f"initial condition {cfg.ic} is not finite")
        approach = 3 if cfg.approach is None else cfg.approach
        state = initial_state(cfg.scheme, model, phi0, cfg.dt, approach=approach)
        stab = StabilizationParams(cfg.eps1 or 0.0, cfg.eps2 or 0.0)
        step = make_stepper(cfg.scheme, approach=approach, stab=stab, on_fold=cfg.on_fold)
    except ConfigError:
        raise
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        raise ConfigError([f"cannot set up run: {exc}"]) from exc
    return PreparedRun(cfg, grid, model, phi0, state, step)


def _constraint_keys(cfg: RunConfig, model) -> tuple[list[str], list[str]]:
    """(value columns, residual keys) reported for this configuration."""
    if isinstance(model, PartitionModel):
        m = model.m
        return [f"H_{j}" for j in range(m)], [f"H_{j}" for j in range(m)] + [f"H_bar_{j}" for j in range(m)]
    if isinstance(model, VesicleModel):
        base = ["H", "A"]
        bars = ["H_bar", "A_bar"] if (cfg.approach or 3) == 3 else []
        return base, base + bars
    if model.constraint is None:
        return [], []
    bars = ["H_bar"] if cfg.scheme == "approach3" else []
    return ["H"], ["H"] + bars


def series_columns(cfg: RunConfig, model) -> list[str]:
    values, residuals = _constraint_keys(cfg, model)
    if isinstance(model, PartitionModel):
        lam = [f"lambda_{j}" for j in range(model.m)]
    else:
        lam = ["lambda"]
    cols = ["t", "E_original", "E_discrete", *values, *(f"{k}_drift" for k in residuals), *lam]
    cols += ["eta", "gamma", "newton_iters", "dissipation", "dissipation_residual", "eta_fold"]
    if cfg.scheme in ("linear_sav", "approach1") or (cfg.model == "vesicle" and cfg.approach == 1):
        cols.append("r")
    return cols


def _reference_values(model, state: SchemeState) -> dict:
    if isinstance(model, PartitionModel):
        return {f"H_{j}": float(h) for j, h in enumerate(state.H0)}
    if isinstance(model, VesicleModel):
        return {"H": state.H0, "A": state.A0}
    return {"H": state.H0} if model.constraint is not None else {}


def _row(t: float, rep: StepReport, refs: dict) -> dict:
    row = {"t": t, "E_original": rep.energy_original, "E_discrete": rep.energy_discrete}
    for k, v in rep.constraint_residuals.items():
        row[f"{k}_drift"] = v
        if k in refs:
            row[k] = refs[k] + v
    lam = np.atleast_1d(np.asarray(rep.lam, dtype=float))
    if lam.size == 1 and np.ndim(rep.lam) == 0:
        row["lambda"] = float(lam[0])
    else:
        for j, v in enumerate(lam):
            row[f"lambda_{j}"] = float(v)
    row.update(
        eta=rep.eta,
        gamma=rep.gamma,
        newton_iters=rep.newton_iters,
        dissipation=rep.dissipation,
        dissipation_residual=rep.dissipation_residual,
        eta_fold=bool(rep.extra.get("eta_fold", False)),
    )
    if "r" in rep.extra:
        row["r"] = rep.extra["r"]
    return row


@dataclass
class SimulationResult:
    """Outcome of :func:`simulate`.

    ``failure`` is ``None`` on success, otherwise a JSON-ready description of
    the numerical failure; ``state`` is then the last valid level.
    """

    config: RunConfig
    state: SchemeState
    series: TimeSeries
    failure: dict | None = None
    last_report: StepReport | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if x is None or isinstance(x, str):
        return x
    return repr(x)


def _failure_record(exc: Exception, state: SchemeState, last_row: dict | None) -> dict:
    return {
        "step": state.step + 1,
        "t_start": state.t,
        "error": type(exc).__name__,
        "multiplier": getattr(exc, "multiplier", None) or None,
        "message": str(exc),
        "residual_trace": _jsonable(getattr(exc, "trace", [])),
        "last_report": {k: _jsonable(v) for k, v in last_row.items()} if last_row else None,
    }


def simulate(
    cfg: RunConfig,
    *,
    prepared: PreparedRun | None = None,
    on_row: Callable[[dict], None] | None = None,
    on_state: Callable[[SchemeState], None] | None = None,
) -> SimulationResult:
    """Integrate to ``T`` in memory, recording every ``series_stride``-th step.

    Numerical failures end the run early and are described in
    ``result.failure``; configuration problems raise :class:`ConfigError`
    before the first step.
    """
    p = prepared or prepare(cfg)
    refs = _reference_values(p.model, p.state)
    initial = {"t": 0.0, "E_original": p.model.energy(p.state.phi), "E_discrete": p.state.energy, **refs}
    series = TimeSeries(series_columns(cfg, p.model), initial)
    state = p.state
    if on_state is not None:
        on_state(state)
    last_rep, last_row = None, None
    for n in range(1, cfg.n_steps + 1):
        try:
            new_state, rep = p.step(state, p.model)
        except NUMERICAL_ERRORS as exc:
            return SimulationResult(cfg, state, series, _failure_record(exc, state, last_row), last_rep)
        state, last_rep = new_state, rep
        last_row = _row(n * cfg.dt, rep, refs)
        if n % cfg.series_stride == 0:
            series.append(last_row)
            if on_row is not None:
                on_row(last_row)
        if on_state is not None:
            on_state(state)
    return SimulationResult(cfg, state, series, None, last_rep)


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".part")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def run(cfg: RunConfig, out_dir) -> int:
    """Run and write ``config.txt``, ``series.csv``, snapshots and on failure ``failure.json``.

    Snapshots ``snap_<step>.cgf`` are written at step 0 and every
    ``snapshot_stride`` steps (none when the stride is 0). Returns the exit
    status: 0 success, 1 numerical failure, 2 configuration error.
    """
    try:
        p = prepare(cfg)
    except ConfigError as exc:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config_error.json", {"violations": exc.violations})
        return EXIT_CONFIG
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(serialize_config(cfg), encoding="utf-8")
    stale = out / "failure.json"
    if stale.exists():
        stale.unlink()
    dims = p.grid.dims
    stride = cfg.snapshot_stride

    def snap(state: SchemeState):
        if stride and state.step % stride == 0:
            write_snapshot(out / f"snap_{state.step:08d}.cgf", state.phi, state.t, dims=dims)

    with CsvSeriesWriter(out / "series.csv", series_columns(cfg, p.model)) as writer:
        result = simulate(cfg, prepared=p, on_row=writer.write, on_state=snap)
    if result.failure is not None:
        _write_json(out / "failure.json", result.failure)
        return EXIT_NUMERICAL
    return EXIT_OK
