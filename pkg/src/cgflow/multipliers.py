"""Scalar and two-variable root finding for the Lagrange multipliers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

__all__ = [
    "NewtonConfig",
    "MultiplierSolveReport",
    "MultiplierFailure",
    "DegeneratePredictorError",
    "newton_scalar",
    "newton_2d",
    "solve_constraint_quadratic",
    "solve_balance_multiplier",
]


@dataclass(frozen=True)
class NewtonConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iters: int = 50
    fd_step: float = 1e-7

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.fd_step > 0):
            raise ValueError("tolerances and fd_step must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class MultiplierSolveReport:
    root: float | tuple[float, float]
    iterations: int
    residual: float
    predictor_used: float | tuple[float, float]
    method: str = "newton"


class MultiplierFailure(RuntimeError):
    """A multiplier equation could not be solved; the usual cure is a smaller dt."""

    def __init__(self, message: str, trace: Sequence | None = None, multiplier: str = ""):
        super().__init__(message)
        self.trace = list(trace or [])
        self.multiplier = multiplier


class DegeneratePredictorError(ArithmeticError):
    """The linear-scheme predictor has a vanishing denominator."""


def _fd_derivative(fun, x, h):
    step = h * max(1.0, abs(x))
    return (fun(x + step) - fun(x - step)) / (2.0 * step)


def newton_scalar(
    residual: Callable[[float], float],
    derivative: Callable[[float], float] | None,
    guess: float,
    cfg: NewtonConfig = NewtonConfig(),
    *,
    abs_tol: float | None = None,
    name: str = "multiplier",
) -> MultiplierSolveReport:
    """Newton's method for ``residual(x) = 0`` with a bracketing fallback.

    Converged when ``|residual(x)| <= abs_tol + rel_tol * |residual(guess)|``.
    If Newton stalls or diverges, brackets ``[guess - w, guess + w]`` with
    ``w = 1, 2, 4, ...`` (ten doublings) are scanned for a sign change and the
    root is polished with Brent's method.
    """
    atol = cfg.abs_tol if abs_tol is None else abs_tol
    x = float(guess)
    r0 = float(residual(x))
    if not math.isfinite(r0):
        raise MultiplierFailure(f"{name}: residual not finite at guess {x!r}", [(x, r0)], name)
    tol = atol + cfg.rel_tol * abs(r0)
    trace = [(x, r0)]
    if abs(r0) <= tol:
        return MultiplierSolveReport(x, 0, abs(r0), float(guess))

    r = r0
    for it in range(1, cfg.max_iters + 1):
        d = derivative(x) if derivative is not None else _fd_derivative(residual, x, cfg.fd_step)
        if not math.isfinite(d) or d == 0.0:
            break
        step = r / d
        x_new = x - step
        r_new = float(residual(x_new))
        trace.append((x_new, r_new))
        if not math.isfinite(r_new):
            break
        x, r = x_new, r_new
        if abs(r) <= tol:
            return MultiplierSolveReport(x, it, abs(r), float(guess))
        if abs(step) <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            # roundoff floor reached above tol
            break

    # bracketing fallback
    width = 1.0
    for _ in range(11):
        lo, hi = guess - width, guess + width
        flo, fhi = residual(lo), residual(hi)
        if math.isfinite(flo) and math.isfinite(fhi) and flo * fhi <= 0:
            root = brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            rr = abs(float(residual(root)))
            trace.append((root, rr))
            if rr <= tol:
                return MultiplierSolveReport(root, len(trace) - 1, rr, float(guess), "bracket")
            break
        width *= 2.0
    raise MultiplierFailure(
        f"{name}: no convergence from guess {guess!r} (last residual {abs(r):.3e}, tol {tol:.3e}); "
        "reduce dt",
        trace,
        name,
    )


def newton_2d(
    residuals: Callable[[float, float], Sequence[float]],
    guess: tuple[float, float],
    cfg: NewtonConfig = NewtonConfig(),
    *,
    jacobian: Callable[[float, float], np.ndarray] | None = None,
    abs_tol: float | Sequence[float] | None = None,
    name: str = "multipliers",
) -> MultiplierSolveReport:
    """Newton's method for a pair of equations in two unknowns.

    ``abs_tol`` may be one value or one per equation. Without an analytic
    ``jacobian`` the columns are central differences with ``cfg.fd_step``.
    """
    atol = np.broadcast_to(
        np.asarray(cfg.abs_tol if abs_tol is None else abs_tol, dtype=float), (2,)
    )
    x = np.array(guess, dtype=float)
    r = np.asarray(residuals(*x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise MultiplierFailure(f"{name}: residual not finite at guess", [(tuple(x), tuple(r))], name)
    tol = atol + cfg.rel_tol * np.abs(r)
    trace = [(tuple(x), tuple(r))]
    if np.all(np.abs(r) <= tol):
        return MultiplierSolveReport(tuple(x), 0, float(np.max(np.abs(r))), tuple(guess))

    for it in range(1, cfg.max_iters + 1):
        if jacobian is not None:
            J = np.asarray(jacobian(*x), dtype=float)
        else:
            J = np.empty((2, 2))
            for k in range(2):
                h = cfg.fd_step * max(1.0, abs(x[k]))
                e = np.zeros(2)
                e[k] = h
                J[:, k] = (np.asarray(residuals(*(x + e))) - np.asarray(residuals(*(x - e)))) / (2 * h)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        scale = (abs(J[0, 0]) + abs(J[0, 1])) * (abs(J[1, 0]) + abs(J[1, 1]))
        if not np.isfinite(det) or abs(det) < 1e-14 * scale or scale == 0:
            raise MultiplierFailure(f"{name}: singular Jacobian (det {det:.3e}); reduce dt", trace, name)
        dx = np.linalg.solve(J, -r)
        x = x + dx
        r = np.asarray(residuals(*x), dtype=float)
        trace.append((tuple(x), tuple(r)))
        if not np.all(np.isfinite(r)):
            break
        if np.all(np.abs(r) <= tol):
            return MultiplierSolveReport(tuple(x), it, float(np.max(np.abs(r))), tuple(guess))
    raise MultiplierFailure(
        f"{name}: Newton did not converge from guess {tuple(guess)!r}; reduce dt", trace, name
    )


def solve_constraint_quadratic(a: float, b: float, c: float, predictor: float) -> float:
    """Real root of ``a x^2 + b x + c = 0`` closest to ``predictor``."""
    a, b, c = float(a), float(b), float(c)
    big = max(abs(a), abs(b), abs(c))
    if big == 0.0 or max(abs(a), abs(b)) <= 1e-14 * big:
        raise MultiplierFailure(f"degenerate quadratic ({a!r}, {b!r}, {c!r})", multiplier="lambda")
    if abs(a) <= 1e-14 * big:
        return -c / b
    disc = b * b - 4.0 * a * c
    if 0 > disc >= -8.0 * np.finfo(float).eps * (b * b + 4.0 * abs(a * c)):
        disc = 0.0  # double root blurred by rounding
    if disc < 0:
        raise MultiplierFailure(
            f"quadratic has no real root (discriminant {disc:.3e}); constraint unreachable at this dt",
            multiplier="lambda",
        )
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    else:
        roots.append(q / a)
    return min(roots, key=lambda x: abs(x - predictor))


def solve_balance_multiplier(
    residual: Callable[[float], float],
    derivative: Callable[[float], float] | None,
    cfg: NewtonConfig = NewtonConfig(),
    *,
    abs_tol: float | None = None,
    on_fold: str = "minimize",
    name: str = "eta",
) -> tuple[MultiplierSolveReport, bool]:
    """Solve an energy-balance equation for a multiplier that should be near 1.

    Newton from 1 first. The balance residual is a low-degree polynomial in
    the multiplier whose slope near 1 is proportional to the rate of change
    of the nonlinear energy, so where that rate changes sign the two roots
    around 1 can merge and disappear for a step or two. With
    ``on_fold="minimize"`` the multiplier then minimises ``|residual|`` on
    ``[0, 2]`` and the second return value is ``True``; with ``"raise"`` the
    :class:`MultiplierFailure` propagates.
    """
    if on_fold not in ("minimize", "raise"):
        raise ValueError(f"on_fold must be 'minimize' or 'raise', got {on_fold!r}")
    try:
        return newton_scalar(residual, derivative, 1.0, cfg, abs_tol=abs_tol, name=name), False
    except MultiplierFailure:
        if on_fold == "raise":
            raise
    res = minimize_scalar(
        lambda x: abs(float(residual(x))), bounds=(0.0, 2.0), method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    x = float(res.x)
    return MultiplierSolveReport(x, int(res.nfev), abs(float(residual(x))), 1.0, "fold-minimum"), True
