"""Flat ``key = value`` run configuration with total validation.

Example::

    model = vesicle
    scheme = vesicle_bdf2
    grid.modes = 64, 64
    time.dt = 1e-4
    time.T = 0.1
    model.epsilon = 0.14726215563702155
    scheme.approach = 3
    ic.name = two_circles_2d

Lines starting with ``#`` and blank lines are ignored. ``ic.<param>`` keys
are passed to the named initial condition and parsed as Python literals
(numbers, tuples), falling back to the raw string. Every violation found is
reported at once in :class:`ConfigError`.
"""

from __future__ import annotations

import ast
import inspect
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction

from .initial import INITIAL_CONDITIONS
from .steppers import SCHEMES

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "serialize_config",
    "MODEL_SCHEMES",
]


class ConfigError(ValueError):
    """One or more configuration violations; ``violations`` lists them all."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


MODEL_SCHEMES = {
    fam: sorted(s for s, (f, _) in SCHEMES.items() if f == fam)
    for fam in ("generic", "vesicle", "partition")
}

_MOBILITIES = ("allen-cahn", "cahn-hilliard")
_POTENTIALS = ("double_well", "zero")
_CONSTRAINTS = ("mass", "norm", "area", "none")
_ON_FOLD = ("minimize", "raise")

# config key -> RunConfig field
_KEYS = {
    "model": "model",
    "scheme": "scheme",
    "grid.modes": "modes",
    "time.dt": "dt",
    "time.T": "T",
    "model.epsilon": "epsilon",
    "model.M": "M",
    "model.C0": "C0",
    "model.m": "m",
    "model.kappa": "kappa",
    "model.mobility": "mobility",
    "model.potential": "potential",
    "model.constraint": "constraint",
    "scheme.approach": "approach",
    "scheme.eps1": "eps1",
    "scheme.eps2": "eps2",
    "scheme.on_fold": "on_fold",
    "ic.name": "ic",
    "seed": "seed",
    "output.snapshot_stride": "snapshot_stride",
    "output.series_stride": "series_stride",
}
_FIELD_KEY = {v: k for k, v in _KEYS.items()}

_MODEL_ONLY = {
    "m": ("partition",),
    "kappa": ("generic",),
    "mobility": ("generic",),
    "potential": ("generic",),
    "constraint": ("generic",),
    "C0": ("generic", "vesicle"),
    "M": ("generic", "vesicle"),
}
_SCHEME_ONLY = {
    "approach": ("vesicle_bdf2",),
    "eps1": ("stabilized",),
    "eps2": ("stabilized",),
}

_DEFAULT_EPSILON = {"generic": 1.0, "vesicle": 6.0 * math.pi / 128.0, "partition": 0.01}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration. ``None`` means "model default"."""

    model: str
    scheme: str
    modes: tuple[int, ...]
    dt: float
    T: float
    ic: str
    epsilon: float | None = None
    M: float | None = None
    C0: float | None = None
    m: int | None = None
    kappa: float | None = None
    mobility: str | None = None
    potential: str | None = None
    constraint: str | None = None
    approach: int | None = None
    eps1: float | None = None
    eps2: float | None = None
    on_fold: str = "minimize"
    seed: int | None = None
    snapshot_stride: int = 0
    series_stride: int = 1
    ic_params: dict = field(default_factory=dict)

    @property
    def dims(self) -> int:
        return len(self.modes)

    @property
    def n_steps(self) -> int:
        return round(Fraction(repr(self.T)) / Fraction(repr(self.dt)))

    @property
    def eps(self) -> float:
        return self.epsilon if self.epsilon is not None else _DEFAULT_EPSILON[self.model]

    def with_changes(self, **changes) -> "RunConfig":
        """Copy with fields replaced, re-validated."""
        return validate(replace(self, **changes))


def _parse_int(text):
    return int(text.strip())


def _parse_float(text):
    v = float(text.strip())
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _parse_modes(text):
    parts = [p for p in text.replace(" ", "").split(",") if p]
    return tuple(int(p) for p in parts)


def _parse_literal(text):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


_PARSERS = {
    "modes": _parse_modes,
    "dt": _parse_float,
    "T": _parse_float,
    "epsilon": _parse_float,
    "M": _parse_float,
    "C0": _parse_float,
    "m": _parse_int,
    "kappa": _parse_float,
    "approach": _parse_int,
    "eps1": _parse_float,
    "eps2": _parse_float,
    "seed": _parse_int,
    "snapshot_stride": _parse_int,
    "series_stride": _parse_int,
}
_REQUIRED = ("model", "scheme", "modes", "dt", "T", "ic")


def _check_divisible(T: float, dt: float) -> bool:
    """``T/dt`` within half an ulp of an integer, or exactly divisible as decimals.

    The decimal test uses the shortest round-trip representations, so
    ``T = 0.3, dt = 0.1`` passes even though ``0.3 / 0.1 = 2.9999999999999996``.
    """
    q = T / dt
    n = round(q)
    if n >= 1 and abs(q - n) <= 0.5 * math.ulp(n):
        return True
    ratio = Fraction(repr(T)) / Fraction(repr(dt))
    return ratio.denominator == 1 and ratio >= 1


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` with every violation."""
    errors = []
    raw = {}
    ic_params = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            errors.append(f"line {lineno}: expected 'key = value', got {s!r}")
            continue
        key, _, value = s.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("ic.") and key != "ic.name":
            name = key[3:]
            if not name.isidentifier():
                errors.append(f"line {lineno}: bad initial-condition parameter name {name!r}")
            elif name in ic_params:
                errors.append(f"line {lineno}: duplicate key {key}")
            else:
                ic_params[name] = _parse_literal(value)
            continue
        if key not in _KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        fname = _KEYS[key]
        if fname in raw:
            errors.append(f"line {lineno}: duplicate key {key}")
            continue
        parser = _PARSERS.get(fname)
        if parser is None:
            raw[fname] = value
        else:
            try:
                raw[fname] = parser(value)
            except ValueError as exc:
                errors.append(f"{key}: cannot parse {value!r} ({exc})")
    missing = [f for f in _REQUIRED if f not in raw]
    errors += [f"missing required key {_FIELD_KEY[f]}" for f in missing]
    if missing:
        raise ConfigError(errors)
    try:
        cfg = validate(RunConfig(ic_params=ic_params, **raw))
    except ConfigError as exc:
        errors += exc.violations
    if errors:
        raise ConfigError(errors)
    return cfg


def _ic_signature(name):
    return inspect.signature(INITIAL_CONDITIONS[name])


def validate(cfg: RunConfig) -> RunConfig:
    """Return ``cfg`` unchanged or raise :class:`ConfigError` listing all violations."""
    e = []
    if cfg.model not in MODEL_SCHEMES:
        e.append(f"model: unknown model {cfg.model!r}; choose from {sorted(MODEL_SCHEMES)}")
    if cfg.scheme not in SCHEMES:
        e.append(f"scheme: unknown scheme {cfg.scheme!r}; choose from {sorted(SCHEMES)}")
    elif cfg.model in MODEL_SCHEMES and cfg.scheme not in MODEL_SCHEMES[cfg.model]:
        e.append(
            f"scheme={cfg.scheme} is incompatible with model={cfg.model} "
            f"(model={cfg.model} accepts scheme in {MODEL_SCHEMES[cfg.model]})"
        )
    if not 1 <= len(cfg.modes) <= 3:
        e.append(f"grid.modes: need 1 to 3 entries, got {len(cfg.modes)}")
    elif any(n < 2 for n in cfg.modes):
        e.append(f"grid.modes: every entry must be >= 2, got {cfg.modes}")
    if not cfg.dt > 0:
        e.append(f"time.dt must be positive, got {cfg.dt!r}")
    if not cfg.T > 0:
        e.append(f"time.T must be positive, got {cfg.T!r}")
    if cfg.dt > 0 and cfg.T > 0 and not _check_divisible(cfg.T, cfg.dt):
        e.append(f"time.T = {cfg.T!r} is not an integer multiple of time.dt = {cfg.dt!r}")

    for fname, models in _MODEL_ONLY.items():
        if getattr(cfg, fname) is not None and cfg.model not in models:
            e.append(f"{_FIELD_KEY[fname]} applies only to model in {list(models)}, not model={cfg.model}")
    for fname, schemes in _SCHEME_ONLY.items():
        if getattr(cfg, fname) is not None and cfg.scheme not in schemes:
            e.append(f"{_FIELD_KEY[fname]} applies only to scheme in {list(schemes)}, not scheme={cfg.scheme}")

    def positive(fname):
        v = getattr(cfg, fname)
        if v is not None and not v > 0:
            e.append(f"{_FIELD_KEY[fname]} must be positive, got {v!r}")

    def nonneg(fname):
        v = getattr(cfg, fname)
        if v is not None and not v >= 0:
            e.append(f"{_FIELD_KEY[fname]} must be non-negative, got {v!r}")

    for f in ("epsilon", "M", "C0"):
        positive(f)
    for f in ("kappa", "eps1", "eps2", "snapshot_stride"):
        nonneg(f)
    if cfg.m is not None and cfg.m < 1:
        e.append(f"model.m must be >= 1, got {cfg.m}")
    if cfg.approach is not None and cfg.approach not in (1, 2, 3):
        e.append(f"scheme.approach must be 1, 2 or 3, got {cfg.approach}")
    if cfg.series_stride < 1:
        e.append(f"output.series_stride must be >= 1, got {cfg.series_stride}")
    for fname, choices in (
        ("mobility", _MOBILITIES),
        ("potential", _POTENTIALS),
        ("constraint", _CONSTRAINTS),
        ("on_fold", _ON_FOLD),
    ):
        v = getattr(cfg, fname)
        if v is not None and v not in choices:
            e.append(f"{_FIELD_KEY[fname]}: {v!r} not in {list(choices)}")

    if cfg.ic not in INITIAL_CONDITIONS:
        e.append(f"ic.name: unknown initial condition {cfg.ic!r}; choose from {sorted(INITIAL_CONDITIONS)}")
    else:
        params = _ic_signature(cfg.ic).parameters
        for p in cfg.ic_params:
            if p not in params or p == "grid":
                e.append(f"ic.{p}: not a parameter of {cfg.ic} (accepts {[q for q in params if q != 'grid']})")
        if cfg.seed is not None:
            if "seed" not in params:
                e.append(f"seed given but {cfg.ic} is not randomized")
            elif "seed" in cfg.ic_params:
                e.append("give either seed or ic.seed, not both")
    if e:
        raise ConfigError(e)
    return cfg


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple) and all(isinstance(x, int) for x in v):
        return ", ".join(str(x) for x in v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config`; defaults left at ``None`` are omitted."""
    lines = []
    defaults = {f.name: f.default for f in fields(RunConfig)}
    for key, fname in _KEYS.items():
        v = getattr(cfg, fname)
        if v is None or (fname not in _REQUIRED and v == defaults.get(fname)):
            continue
        lines.append(f"{key} = {_fmt(v)}")
    for name in sorted(cfg.ic_params):
        v = cfg.ic_params[name]
        lines.append(f"ic.{name} = {v if isinstance(v, str) else repr(v)}")
    return "\n".join(lines) + "\n"
