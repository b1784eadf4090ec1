"""Schemes for the single-constraint model ``E = 1/2 (L phi, phi) + int F``.

Two families share this module:

* first-order SAV steps (linear multiplier, or the multiplier fixed by the
  nonlinear constraint equation), built from two constant-coefficient solves
  per sub-problem with the auxiliary scalar eliminated by block elimination;
* Crank-Nicolson steps with a dynamic multiplier ``eta`` on the explicit
  nonlinear force, in a coupled, a decoupled and a stabilized form.

For Crank-Nicolson the first step reuses ``phi^0`` as the missing level, so
the extrapolants collapse to their lagged values and the discrete
dissipation identity holds from step one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models import GenericModel
from ..multipliers import DegeneratePredictorError, newton_2d, newton_scalar, solve_balance_multiplier
from .base import (
    SchemeState,
    StabilizationParams,
    StepReport,
    constraint_tol,
    ensure_finite,
    multiplier_config,
)

__all__ = [
    "initial_generic_state",
    "lambda_predictor_linear_sav",
    "step_sav_unconstrained",
    "step_linear_sav",
    "step_approach1",
    "step_approach2_cn",
    "step_approach3_cn",
    "step_stabilized_cn",
    "stabilized_energy",
]


def initial_generic_state(model: GenericModel, phi0, dt: float, sav: bool = False) -> SchemeState:
    """State at ``t = 0``; ``sav=True`` also initialises ``r = sqrt(int F + C0)``."""
    phi0 = model.grid.check(phi0).copy()
    ensure_finite(phi0)
    H0 = model.constraint_value(phi0)
    if sav:
        r0 = model.sav_variable(phi0)
        return SchemeState(phi0, dt, r=r0, H0=H0, lam=0.0, energy=model.modified_energy(phi0, r0))
    return SchemeState(phi0, dt, H0=H0, lam=0.0, energy=model.energy(phi0))


# ---------------------------------------------------------------------------
# first-order SAV


@dataclass
class _SavSplit:
    phi1: np.ndarray
    r1: float
    b: np.ndarray
    w: np.ndarray
    denom: float
    op: object


def _sav_first_part(state: SchemeState, model: GenericModel) -> _SavSplit:
    """Solve for the multiplier-free part ``(phi1, r1)``."""
    if state.r is None:
        raise ValueError("SAV schemes need r in the state (use sav=True)")
    g = model.grid
    dt = state.dt
    phi = state.phi
    b = model.F_prime(phi) / model.sav_variable(phi)
    op = (1.0 / dt) * g.identity() + model.mobility_op * model.linear_op
    p = g.solve(op, phi / dt)
    w = g.solve(op, model.apply_G(b))
    denom = 1.0 + 0.5 * g.inner(b, w)
    r1 = (state.r + 0.5 * g.inner(b, p - phi)) / denom
    return _SavSplit(p - r1 * w, r1, b, w, denom, op)


def _sav_second_part(state, model, split: _SavSplit, d):
    """Solve for the part multiplying the constraint force ``d``."""
    g = model.grid
    v = g.solve(split.op, model.apply_G(d))
    r2 = 0.5 * g.inner(split.b, v) / split.denom
    return v - r2 * split.w, r2


def _linear_lambda(g, d, phi1, phi2, phi):
    num = g.inner(d, phi1 - phi)
    den = g.inner(d, phi2)
    scale = np.sqrt(g.inner(d, d) * g.inner(phi2, phi2))
    if scale == 0.0 or abs(den) <= 1e-14 * scale:
        raise DegeneratePredictorError(
            f"constraint force is orthogonal to its own response ((d, phi2) = {den!r})"
        )
    return -num / den


def lambda_predictor_linear_sav(state: SchemeState, model: GenericModel) -> float:
    """Multiplier of the linear SAV scheme, used as a Newton guess elsewhere."""
    split = _sav_first_part(state, model)
    d = model.constraint_derivative(state.phi)
    phi2, _ = _sav_second_part(state, model, split, d)
    return _linear_lambda(model.grid, d, split.phi1, phi2, state.phi)


def _finish_sav(state, model, phi_new, r_new, lam, split, d, iters):
    g = model.grid
    ensure_finite(phi_new)
    if not r_new > 0:
        raise FloatingPointError(f"SAV variable became non-positive ({r_new!r}); reduce dt")
    a = phi_new - state.phi
    mu = model.apply_L(phi_new) + r_new * split.b - lam * d
    diss = -state.dt * g.inner(model.apply_G(mu), mu)
    e_new = model.modified_energy(phi_new, r_new)
    e_old = state.energy if state.energy is not None else model.modified_energy(state.phi, state.r)
    rhs = diss - 0.5 * g.inner(model.apply_L(a), a) - (r_new - state.r) ** 2 + lam * g.inner(d, a)
    H = model.constraint_value(phi_new)
    rep = StepReport(
        lam=lam,
        newton_iters=iters,
        energy_original=model.energy(phi_new),
        energy_discrete=e_new,
        constraint_residuals={"H": H - state.H0} if model.constraint is not None else {},
        dissipation=diss,
        dissipation_residual=(e_new - e_old) - rhs,
        extra={"r": r_new, "tangency": g.inner(d, a)},
    )
    rep.check_finite()
    return state.advanced(phi_new, r=r_new, lam=lam, energy=e_new), rep


def step_sav_unconstrained(state: SchemeState, model: GenericModel):
    """Plain first-order SAV step (no constraint force)."""
    split = _sav_first_part(state, model)
    d = np.zeros(model.grid.shape)
    return _finish_sav(state, model, split.phi1, split.r1, 0.0, split, d, 0)


def step_linear_sav(state: SchemeState, model: GenericModel):
    """First-order SAV step with the multiplier fixed by tangency.

    The multiplier makes ``phi^{n+1} - phi^n`` orthogonal to the constraint
    gradient at ``phi^n``, so the constraint is kept to first order only.
    """
    if model.constraint is None:
        return step_sav_unconstrained(state, model)
    split = _sav_first_part(state, model)
    d = model.constraint_derivative(state.phi)
    phi2, r2 = _sav_second_part(state, model, split, d)
    if not np.any(phi2):
        # the mobility annihilates the constraint force; H is conserved anyway
        return _finish_sav(state, model, split.phi1, split.r1, 0.0, split, d, 0)
    lam = _linear_lambda(model.grid, d, split.phi1, phi2, state.phi)
    return _finish_sav(state, model, split.phi1 + lam * phi2, split.r1 + lam * r2, lam, split, d, 0)


def step_approach1(state: SchemeState, model: GenericModel):
    """First-order SAV step with ``H(phi^{n+1}) = H(phi^0)`` enforced exactly."""
    if model.constraint is None:
        return step_sav_unconstrained(state, model)
    g = model.grid
    split = _sav_first_part(state, model)
    d = model.constraint_derivative(state.phi)
    phi2, r2 = _sav_second_part(state, model, split, d)
    if not np.any(phi2):
        return _finish_sav(state, model, split.phi1, split.r1, 0.0, split, d, 0)
    guess = _linear_lambda(g, d, split.phi1, phi2, state.phi)
    con = model.constraint
    phi1 = split.phi1

    rep = newton_scalar(
        lambda lam: con.value(phi1 + lam * phi2) - state.H0,
        lambda lam: g.inner(con.derivative(phi1 + lam * phi2), phi2),
        guess,
        multiplier_config(),
        abs_tol=constraint_tol(state.H0),
        name="lambda",
    )
    lam = rep.root
    return _finish_sav(state, model, phi1 + lam * phi2, split.r1 + lam * r2, lam, split, d, rep.iterations)


# ---------------------------------------------------------------------------
# Crank-Nicolson with a dynamic multiplier


def stabilized_energy(model: GenericModel, phi_new, phi_old, dt: float, stab: StabilizationParams):
    """``E(phi_new)`` plus the two stabilization quadratics of the increment."""
    g = model.grid
    a = phi_new - phi_old
    extra = 0.0
    if stab.eps1:
        extra += 0.5 * stab.eps1 / dt**2 * g.inner(a, a)
    if stab.eps2:
        extra += 0.5 * stab.eps2 / dt**2 * g.inner(model.apply_L(a), a)
    return model.energy(phi_new) + extra


@dataclass
class _CNSplit:
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    b: np.ndarray
    d: np.ndarray
    prev: np.ndarray
    c1: float
    c2: float


def _cn_split(state: SchemeState, model: GenericModel, stab: StabilizationParams) -> _CNSplit:
    g = model.grid
    dt = state.dt
    phi = state.phi
    prev = state.phi if state.phi_prev is None else state.phi_prev
    L, G = model.linear_op, model.mobility_op
    c1 = stab.eps1 / dt**2
    c2 = stab.eps2 / dt**2
    K = 0.5 * L + c1 * g.identity() + c2 * L
    op = (1.0 / dt) * g.identity() + G * K

    rhs = phi / dt - g.apply(G * (0.5 * L), phi)
    if c1 or c2:
        rhs = rhs - g.apply(G * (c1 * g.identity() + c2 * L), prev - 2.0 * phi)
    b = 1.5 * model.F_prime(phi) - 0.5 * model.F_prime(prev)
    d = 1.5 * model.constraint_derivative(phi) - 0.5 * model.constraint_derivative(prev)
    phi1 = g.solve(op, rhs)
    phi2 = g.solve(op, -model.apply_G(b))
    phi3 = g.solve(op, model.apply_G(d))
    return _CNSplit(phi1, phi2, phi3, b, d, prev, c1, c2)


def _cn_lambda_guess(g, s: _CNSplit, phi, fallback):
    try:
        return _linear_lambda(g, s.d, s.phi1 + s.phi2, s.phi3, phi)
    except DegeneratePredictorError:
        return 0.0 if fallback is None else float(fallback)


def _energy_residual(model, s: _CNSplit, phi, eta, lam):
    """Nonlinear-energy balance ``int F(new) - int F(old) - eta (b, a) + lam (d, a)``."""
    g = model.grid
    Fn = model.nonlinear_energy(phi)

    def combine(eta, lam):
        return s.phi1 + eta * s.phi2 + lam * s.phi3

    def res(eta, lam):
        new = combine(eta, lam)
        a = new - phi
        return model.nonlinear_energy(new) - Fn - eta * g.inner(s.b, a) + lam * g.inner(s.d, a)

    def d_eta(eta, lam):
        new = combine(eta, lam)
        a = new - phi
        dF = model.potential_prime(new)
        return g.inner(dF - eta * s.b + lam * s.d, s.phi2) - g.inner(s.b, a)

    def d_lam(eta, lam):
        new = combine(eta, lam)
        a = new - phi
        dF = model.potential_prime(new)
        return g.inner(dF - eta * s.b + lam * s.d, s.phi3) + g.inner(s.d, a)

    return combine, res, d_eta, d_lam


def _energy_tol(model, phi):
    return 1e-12 * (1.0 + abs(model.nonlinear_energy(phi)) + abs(model.quadratic_energy(phi)))


def _finish_cn(state, model, stab, s: _CNSplit, phi_new, eta, lam, iters, extra_res):
    g = model.grid
    ensure_finite(phi_new)
    phi = state.phi
    dt = state.dt
    mid = 0.5 * model.apply_L(phi_new + phi)
    stab_term = s.c1 * (phi_new - 2.0 * phi + s.prev) + s.c2 * model.apply_L(phi_new - 2.0 * phi + s.prev)
    mu = mid + stab_term + eta * s.b - lam * s.d
    diss = -dt * g.inner(model.apply_G(mu), mu)
    e_new = stabilized_energy(model, phi_new, phi, dt, stab)
    e_old = state.energy if state.energy is not None else stabilized_energy(model, phi, s.prev, dt, stab)
    jump = phi_new - 2.0 * phi + s.prev
    rhs = diss
    if s.c1:
        rhs -= 0.5 * s.c1 * g.inner(jump, jump)
    if s.c2:
        rhs -= 0.5 * s.c2 * g.inner(model.apply_L(jump), jump)
    res = {}
    if model.constraint is not None:
        res["H"] = model.constraint_value(phi_new) - state.H0
    res.update(extra_res)
    rep = StepReport(
        lam=lam,
        eta=eta,
        newton_iters=iters,
        energy_original=model.energy(phi_new),
        energy_discrete=e_new,
        constraint_residuals=res,
        dissipation=diss,
        dissipation_residual=(e_new - e_old) - rhs,
    )
    rep.check_finite()
    return state.advanced(phi_new, lam=lam, energy=e_new), rep


def step_stabilized_cn(
    state: SchemeState, model: GenericModel, stab: StabilizationParams, on_fold: str = "minimize"
):
    """Crank-Nicolson step with ``(eta, lambda)`` from a coupled 2x2 Newton solve.

    The stabilization terms ``eps1 (phi^{n+1} - 2 phi^n + phi^{n-1}) / dt^2``
    and ``eps2 L(...) / dt^2`` enter the chemical potential; both are folded
    into the constant-coefficient operator. Without an active constraint only
    ``eta`` is solved, with ``on_fold`` as in
    :func:`~cgflow.multipliers.solve_balance_multiplier`.
    """
    g = model.grid
    s = _cn_split(state, model, stab)
    combine, res_F, d_eta, d_lam = _energy_residual(model, s, state.phi, None, None)
    ftol = _energy_tol(model, state.phi)
    con = model.constraint

    fold = False
    if con is None or not np.any(s.phi3):
        rep, fold = solve_balance_multiplier(
            lambda e: res_F(e, 0.0), lambda e: d_eta(e, 0.0),
            multiplier_config(), abs_tol=ftol, on_fold=on_fold,
        )
        eta, lam, iters = rep.root, 0.0, rep.iterations
    else:
        def residuals(eta, lam):
            return (con.value(combine(eta, lam)) - state.H0, res_F(eta, lam))

        def jac(eta, lam):
            dH = con.derivative(combine(eta, lam))
            return np.array(
                [
                    [g.inner(dH, s.phi2), g.inner(dH, s.phi3)],
                    [d_eta(eta, lam), d_lam(eta, lam)],
                ]
            )

        guess = (1.0, _cn_lambda_guess(g, s, state.phi, state.lam))
        rep = newton_2d(
            residuals, guess, multiplier_config(), jacobian=jac,
            abs_tol=(constraint_tol(state.H0), ftol), name="eta/lambda",
        )
        (eta, lam), iters = rep.root, rep.iterations
    new_state, report = _finish_cn(state, model, stab, s, combine(eta, lam), eta, lam, iters, {})
    report.extra["eta_fold"] = fold
    return new_state, report


def step_approach2_cn(state: SchemeState, model: GenericModel, on_fold: str = "minimize"):
    """Crank-Nicolson step with ``H(phi^{n+1})`` and the energy balance solved jointly."""
    return step_stabilized_cn(state, model, StabilizationParams(), on_fold)


def step_approach3_cn(state: SchemeState, model: GenericModel, on_fold: str = "minimize"):
    """Crank-Nicolson step with the multipliers decoupled.

    ``lambda`` enforces the constraint on ``phi1 + phi2 + lambda*phi3``
    (the multiplier-free combination at ``eta = 1``); ``eta`` then restores
    the energy balance. The constraint on ``phi^{n+1}`` itself drifts at
    second order and is reported under ``H``. ``extra["eta_fold"]`` marks
    steps where the balance equation had no real root.
    """
    g = model.grid
    s = _cn_split(state, model, StabilizationParams())
    combine, res_F, d_eta, _ = _energy_residual(model, s, state.phi, None, None)
    con = model.constraint
    iters = 0
    extra = {}
    lam = 0.0
    if con is not None and np.any(s.phi3):
        base = s.phi1 + s.phi2
        rep = newton_scalar(
            lambda lam: con.value(base + lam * s.phi3) - state.H0,
            lambda lam: g.inner(con.derivative(base + lam * s.phi3), s.phi3),
            _cn_lambda_guess(g, s, state.phi, state.lam),
            multiplier_config(),
            abs_tol=constraint_tol(state.H0),
            name="lambda",
        )
        lam, iters = rep.root, rep.iterations
        extra["H_bar"] = con.value(base + lam * s.phi3) - state.H0
    rep, fold = solve_balance_multiplier(
        lambda e: res_F(e, lam), lambda e: d_eta(e, lam),
        multiplier_config(), abs_tol=_energy_tol(model, state.phi), on_fold=on_fold,
    )
    eta = rep.root
    new_state, report = _finish_cn(
        state, model, StabilizationParams(), s, combine(eta, lam), eta, lam, iters + rep.iterations, extra
    )
    report.extra["surrogate_gap"] = float(np.max(np.abs((1.0 - eta) * s.phi2)))
    report.extra["eta_fold"] = fold
    return new_state, report
