"""BDF2 steps for the vesicle membrane with volume and surface-area constraints.

Each step solves ``(w0/tau + M eps Bilaplacian) u = g`` for a handful of
right-hand sides, where BDF2 uses ``w = (3, -4, 1)`` and ``tau = 2 dt`` and
the backward-Euler start uses ``w = (1, -1, 0)`` and ``tau = dt``. The
chemical potential is

    mu = eps Bilap phi^{n+1} + eta q* + gamma + lambda d*,

with ``q = dQ/dphi``, ``d = dH/dphi`` extrapolated as ``2 g^n - g^{n-1}``.
The volume multiplier ``gamma`` only shifts the mean, so it is recovered
from ``A(phi) = A0`` in closed form for every candidate field.

Approaches:

1. SAV form: ``q*`` is replaced by ``r b*`` with ``r ~ sqrt(int Q + C0)``;
   both constraints hold on ``phi^{n+1}``.
2. ``(eta, lambda)`` from a coupled Newton solve; both constraints and the
   ``Q`` balance hold on ``phi^{n+1}``.
3. ``lambda`` fixes the area of the surrogate ``eta = 1`` field, then
   ``eta`` restores the ``Q`` balance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models import VesicleModel
from ..multipliers import newton_2d, newton_scalar, solve_balance_multiplier
from .base import SchemeState, StepReport, constraint_tol, ensure_finite, multiplier_config

__all__ = ["initial_vesicle_state", "vesicle_sav_shift", "vesicle_bdf2_energy", "step_vesicle_bdf2"]

_BDF2 = (3.0, -4.0, 1.0)
_EULER = (1.0, -1.0, 0.0)


def vesicle_sav_shift(model: VesicleModel, H0: float) -> float:
    """``C0`` keeping ``int Q + C0 > 0`` while the area stays at ``H0``.

    ``int Q >= -(1/eps) int |grad phi|^2 >= -2 H / eps^2``; twice that margin
    plus one is used.
    """
    if model.C0 is not None:
        return float(model.C0)
    return 4.0 * H0 / model.epsilon**2 + 1.0


def initial_vesicle_state(model: VesicleModel, phi0, dt: float, approach: int = 3) -> SchemeState:
    g = model.grid
    phi0 = g.check(phi0).copy()
    ensure_finite(phi0)
    A0, H0 = model.constraints(phi0)
    e0 = model.biharmonic_energy(phi0) + model.Q_energy(phi0)
    r0 = None
    if approach == 1:
        C0 = vesicle_sav_shift(model, H0)
        r0 = _sav_root(model, phi0, C0)
        e0 = model.biharmonic_energy(phi0) + r0 * r0 - C0
    return SchemeState(phi0, dt, r=r0, H0=H0, A0=A0, lam=0.0, energy=e0)


def _sav_root(model, phi, C0):
    val = model.Q_energy(phi) + C0
    if not val > 0:
        raise FloatingPointError(f"int Q + C0 = {val!r} <= 0; raise C0")
    return float(np.sqrt(val))


def vesicle_bdf2_energy(model: VesicleModel, phi_new, phi_old) -> float:
    """``eps/4 (|Lap a|^2 + |Lap(2a - b)|^2) + 1/2 int (3 Q(a) - Q(b))``."""
    return _bdf2_quadratic(model, phi_new, phi_old) + 0.5 * (
        3.0 * model.Q_energy(phi_new) - model.Q_energy(phi_old)
    )


def _bdf2_quadratic(model, a, b):
    g = model.grid
    lap = g.laplacian()
    la = g.apply(lap, a)
    lb = g.apply(lap, 2.0 * a - b)
    return 0.25 * model.epsilon * (g.inner(la, la) + g.inner(lb, lb))


@dataclass
class _Setup:
    w: tuple
    tau: float
    op: object
    hist: np.ndarray  # w1 phi^n + w2 phi^{n-1}
    prev: np.ndarray
    const: float  # value of the solve with rhs -M (a constant field)


def _setup(state: SchemeState, model: VesicleModel) -> _Setup:
    g = model.grid
    first = state.phi_prev is None
    w = _EULER if first else _BDF2
    tau = state.dt if first else 2.0 * state.dt
    prev = state.phi if first else state.phi_prev
    op = (w[0] / tau) * g.identity() + (model.M * model.epsilon) * g.biharmonic()
    hist = w[1] * state.phi + w[2] * prev
    return _Setup(w, tau, op, hist, prev, -model.M * tau / w[0])


def _extrap(first, f_now, f_prev):
    return f_now if first else 2.0 * f_now - f_prev


def _volume_fix(g, base, setup: _Setup, A0):
    """Return ``(field, gamma)`` with the mean adjusted to the target volume."""
    gamma = (A0 - g.integrate(base)) / (setup.const * g.volume)
    return base + gamma * setup.const, gamma


def _centered(f):
    return f - np.mean(f)


def step_vesicle_bdf2(
    state: SchemeState, model: VesicleModel, approach: int = 3, on_fold: str = "minimize"
):
    """Advance the vesicle flow by one BDF2 step (backward Euler at step 0).

    Parameters
    ----------
    approach : {1, 2, 3}
        Multiplier treatment; see the module docstring.
    on_fold : {"minimize", "raise"}
        Approach 3 only: what to do when the ``eta`` balance has no real
        root (see :func:`~cgflow.multipliers.solve_balance_multiplier`).

    Returns
    -------
    (SchemeState, StepReport)
        ``energy_discrete`` is the two-level energy the scheme dissipates
        (at ``t = 0`` the state carries the plain energy). For approach 3 the
        enforced residuals are ``A_bar`` and ``H_bar``; ``A`` and ``H`` always
        refer to ``phi^{n+1}``.
    """
    if approach not in (1, 2, 3):
        raise ValueError(f"approach must be 1, 2 or 3, got {approach!r}")
    if approach == 1:
        return _step_sav(state, model)
    return _step_eta(state, model, approach, on_fold)


def _finish(state, model, phi_new, mu, lam, eta, gamma, iters, res, e_new, rhs_extra, new_r=None):
    g = model.grid
    ensure_finite(phi_new)
    diss = -state.dt * model.M * g.inner(mu, mu)
    lap = g.laplacian()
    first = state.phi_prev is None
    if first:
        # two-level energy against the plain energy of phi^0
        s = g.apply(lap, phi_new - state.phi)
        rhs = 1.5 * diss - 0.25 * model.epsilon * g.inner(s, s)
    else:
        s = g.apply(lap, phi_new - 2.0 * state.phi + state.phi_prev)
        rhs = diss - 0.25 * model.epsilon * g.inner(s, s)
    rhs += rhs_extra
    A, H = model.constraints(phi_new)
    res = {"A": A - state.A0, "H": H - state.H0, **res}
    rep = StepReport(
        lam=lam,
        eta=eta,
        gamma=gamma,
        newton_iters=iters,
        energy_original=model.bending_energy(phi_new),
        energy_discrete=e_new,
        constraint_residuals=res,
        dissipation=diss,
        dissipation_residual=(e_new - state.energy) - rhs,
    )
    rep.check_finite()
    return state.advanced(phi_new, r=new_r, lam=lam, energy=e_new), rep


def _step_eta(state: SchemeState, model: VesicleModel, approach: int, on_fold: str):
    g = model.grid
    M = model.M
    first = state.phi_prev is None
    st = _setup(state, model)
    phi, prev = state.phi, st.prev
    q_now = model.dQ_dphi(phi)
    d_now = model.dH_dphi(phi)
    q_star = _extrap(first, q_now, None if first else model.dQ_dphi(prev))
    d_star = _extrap(first, d_now, None if first else model.dH_dphi(prev))

    phi1 = g.solve(st.op, -st.hist / st.tau)
    phi2 = g.solve(st.op, -M * q_star)
    phi4 = g.solve(st.op, -M * d_star)
    p2, p4 = _centered(phi2), _centered(phi4)
    w0 = st.w[0]
    Q_hist = st.w[1] * model.Q_energy(phi) + (st.w[2] * model.Q_energy(prev) if st.w[2] else 0.0)

    def field(eta, lam):
        return _volume_fix(g, phi1 + eta * phi2 + lam * phi4, st, state.A0)

    def q_res(eta, lam):
        u, _ = field(eta, lam)
        incr = w0 * u + st.hist
        return (
            w0 * model.Q_energy(u) + Q_hist
            - eta * g.inner(q_star, incr) - lam * g.inner(d_star, incr)
        )

    def q_grad(eta, lam):
        u, _ = field(eta, lam)
        incr = w0 * u + st.hist
        force = model.dQ_dphi(u) - eta * q_star - lam * d_star
        return (
            w0 * g.inner(force, p2) - g.inner(q_star, incr),
            w0 * g.inner(force, p4) - g.inner(d_star, incr),
        )

    def h_res(eta, lam):
        return model.area(field(eta, lam)[0]) - state.H0

    qtol = 1e-12 * (1.0 + abs(model.Q_energy(phi)) + model.biharmonic_energy(phi))
    htol = constraint_tol(state.H0)
    guess_lam = 0.0 if state.lam is None else float(state.lam)
    res = {}
    if approach == 2:
        def jac(eta, lam):
            dH = model.dH_dphi(field(eta, lam)[0])
            ge, gl = q_grad(eta, lam)
            return np.array([[g.inner(dH, p2), g.inner(dH, p4)], [ge, gl]])

        rep = newton_2d(
            lambda e, l: (h_res(e, l), q_res(e, l)), (1.0, guess_lam), multiplier_config(),
            jacobian=jac, abs_tol=(htol, qtol), name="eta/lambda",
        )
        (eta, lam), iters = rep.root, rep.iterations
    else:
        lrep = newton_scalar(
            lambda l: h_res(1.0, l),
            lambda l: g.inner(model.dH_dphi(field(1.0, l)[0]), p4),
            guess_lam, multiplier_config(), abs_tol=htol, name="lambda",
        )
        lam = lrep.root
        erep, fold = solve_balance_multiplier(
            lambda e: q_res(e, lam), lambda e: q_grad(e, lam)[0],
            multiplier_config(), abs_tol=qtol, on_fold=on_fold,
        )
        eta = erep.root
        iters = lrep.iterations + erep.iterations
        bar, _ = field(1.0, lam)
        A_bar, H_bar = model.constraints(bar)
        res = {"A_bar": A_bar - state.A0, "H_bar": H_bar - state.H0}

    phi_new, gamma = field(eta, lam)
    mu = (
        model.epsilon * g.apply(g.biharmonic(), phi_new)
        + eta * q_star + gamma + lam * d_star
    )
    e_new = vesicle_bdf2_energy(model, phi_new, phi)
    new_state, rep = _finish(state, model, phi_new, mu, lam, eta, gamma, iters, res, e_new, 0.0)
    if approach == 3:
        rep.extra["surrogate_gap"] = float(np.max(np.abs(phi_new - field(1.0, lam)[0])))
        rep.extra["eta_fold"] = fold
    return new_state, rep


def _step_sav(state: SchemeState, model: VesicleModel):
    g = model.grid
    M = model.M
    first = state.phi_prev is None
    st = _setup(state, model)
    phi, prev = state.phi, st.prev
    if state.r is None:
        raise ValueError("approach 1 needs the SAV variable (build the state with approach=1)")
    C0 = vesicle_sav_shift(model, state.H0)
    w0, w1, w2 = st.w

    b_now = model.dQ_dphi(phi) / _sav_root(model, phi, C0)
    if first:
        b_star = b_now
        d_star = model.dH_dphi(phi)
        r_hist = w1 * state.r
    else:
        b_prev = model.dQ_dphi(prev) / _sav_root(model, prev, C0)
        b_star = 2.0 * b_now - b_prev
        d_star = 2.0 * model.dH_dphi(phi) - model.dH_dphi(prev)
        r_hist = w1 * state.r + w2 * state.r_prev

    p = g.solve(st.op, -st.hist / st.tau)
    wv = g.solve(st.op, M * b_star)
    c4 = g.solve(st.op, -M * d_star)
    c3 = np.full(g.shape, st.const)
    denom = w0 * (1.0 + 0.5 * g.inner(b_star, wv))
    r1 = (-r_hist + 0.5 * g.inner(b_star, w0 * p + st.hist)) / denom
    r3 = 0.5 * w0 * g.inner(b_star, c3) / denom
    r4 = 0.5 * w0 * g.inner(b_star, c4) / denom
    P1, P3, P4 = p - r1 * wv, c3 - r3 * wv, c4 - r4 * wv
    A1, A3, A4 = g.integrate(P1), g.integrate(P3), g.integrate(P4)

    def gamma_of(lam):
        return (state.A0 - A1 - lam * A4) / A3

    dir4 = P4 - (A4 / A3) * P3

    def field(lam):
        return P1 + gamma_of(lam) * P3 + lam * P4

    rep = newton_scalar(
        lambda l: model.area(field(l)) - state.H0,
        lambda l: g.inner(model.dH_dphi(field(l)), dir4),
        0.0 if state.lam is None else float(state.lam),
        multiplier_config(), abs_tol=constraint_tol(state.H0), name="lambda",
    )
    lam = rep.root
    gamma = gamma_of(lam)
    phi_new = field(lam)
    r_new = r1 + gamma * r3 + lam * r4
    if not r_new > 0:
        raise FloatingPointError(f"SAV variable became non-positive ({r_new!r}); reduce dt")
    mu = (
        model.epsilon * g.apply(g.biharmonic(), phi_new)
        + r_new * b_star + gamma + lam * d_star
    )
    incr = w0 * phi_new + st.hist
    quad = _bdf2_quadratic(model, phi_new, phi)
    e_new = quad + 0.5 * (r_new**2 + (2.0 * r_new - state.r) ** 2) - C0
    if first:
        rhs_extra = _first_sav_extra(r_new, state.r, lam, g.inner(d_star, incr))
    else:
        jump = r_new - 2.0 * state.r + state.r_prev
        rhs_extra = -0.5 * jump**2 - 0.5 * lam * g.inner(d_star, incr)
    new_state, report = _finish(
        state, model, phi_new, mu, lam, None, gamma, rep.iterations, {}, e_new, rhs_extra, new_r=r_new
    )
    report.extra["r"] = r_new
    return new_state, report


def _first_sav_extra(r_new, r_old, lam, work):
    """Non-dissipative terms of the first (backward-Euler) SAV step.

    With ``delta_r = r^1 - r^0`` and ``work = (d*, phi^1 - phi^0)``:
    ``E^1_two-level - E^0 = -3/2 dt M |mu|^2 - eps/4 |Lap delta|^2
    - 1/2 delta_r^2 - 3/2 lambda work``.
    """
    dr = r_new - r_old
    return -0.5 * dr * dr - 1.5 * lam * work
