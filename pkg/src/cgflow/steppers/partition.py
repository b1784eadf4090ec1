"""BDF2 step for the multi-component partition flow with unit-norm constraints.

Component ``j`` solves ``(w0/tau - Lap) u = g`` three times: for the history
(``psi0``), the norm force ``phi_j*`` (``psi1``) and the repulsion force
``-f_j*`` (``psi2``), where ``f_j = dF/dphi_j``. The surrogate
``psi0 + lambda_j psi1 + psi2`` has the initial norm exactly (a quadratic in
``lambda_j``); ``phi^{n+1} = psi0 + lambda_j psi1 + eta psi2`` with ``eta``
restoring the interaction-energy balance.
"""

from __future__ import annotations

import numpy as np

from ..models import PartitionModel
from ..multipliers import solve_balance_multiplier, solve_constraint_quadratic
from .base import SchemeState, StepReport, ensure_finite, multiplier_config

__all__ = ["initial_partition_state", "partition_bdf2_energy", "step_partition_bdf2"]


def initial_partition_state(model: PartitionModel, phis0, dt: float) -> SchemeState:
    phis0 = model.stack(phis0).copy()
    ensure_finite(phis0)
    return SchemeState(
        phis0, dt, H0=model.norms(phis0), lam=np.zeros(model.m), energy=model.energy(phis0)
    )


def partition_bdf2_energy(model: PartitionModel, new, old) -> float:
    """``1/4 sum ((-Lap a, a) + (-Lap(2a-b), 2a-b)) + 1/2 int (3 F(a) - F(b))``."""
    return 0.5 * (model.gradient_energy(new) + model.gradient_energy(2.0 * new - old)) + 0.5 * (
        3.0 * model.interaction(new) - model.interaction(old)
    )


def step_partition_bdf2(state: SchemeState, model: PartitionModel, on_fold: str = "minimize"):
    """Advance all components by one BDF2 step (backward Euler at step 0).

    ``extra["eta_vacuous"]`` is set when every repulsion force vanishes
    (single component, or disjoint supports); ``eta`` is then left at 1
    because the balance equation no longer involves it. ``extra["eta_fold"]``
    marks steps where the balance equation had no real root (see
    :func:`~cgflow.multipliers.solve_balance_multiplier`).
    """
    g = model.grid
    phi = model.stack(state.phi)
    first = state.phi_prev is None
    if first:
        w, tau, prev = (1.0, -1.0, 0.0), state.dt, phi
    else:
        w, tau, prev = (3.0, -4.0, 1.0), 2.0 * state.dt, model.stack(state.phi_prev)
    w0 = w[0]
    op = (w0 / tau) * g.identity() - g.laplacian()
    hist = w[1] * phi + w[2] * prev
    if first:
        star, f_star = phi, model.dF_all(phi)
    else:
        star, f_star = 2.0 * phi - prev, 2.0 * model.dF_all(phi) - model.dF_all(prev)

    psi0 = np.stack([g.solve(op, -h / tau) for h in hist])
    psi1 = np.stack([g.solve(op, s) for s in star])
    psi2 = np.stack([g.solve(op, -f) for f in f_star])

    lam = np.empty(model.m)
    for j in range(model.m):
        base = psi0[j] + psi2[j]
        a = g.inner(psi1[j], psi1[j])
        b = 2.0 * g.inner(psi1[j], base)
        c = g.inner(base, base) - state.H0[j]
        pred = -c / b if b != 0.0 else 0.0
        lam[j] = solve_constraint_quadratic(a, b, c, pred)
    lam_col = lam.reshape((-1,) + (1,) * g.dims)
    fixed = psi0 + lam_col * psi1
    bar = fixed + psi2

    F_hist = w[1] * model.interaction(phi) + (w[2] * model.interaction(prev) if w[2] else 0.0)

    def field(eta):
        return fixed + eta * psi2

    def inner_sum(x, y):
        return sum(g.inner(xj, yj) for xj, yj in zip(x, y))

    def residual(eta):
        u = field(eta)
        incr = w0 * u + hist
        return (
            w0 * model.interaction(u) + F_hist
            - eta * inner_sum(f_star, incr) + inner_sum(lam_col * star, incr)
        )

    def slope(eta):
        u = field(eta)
        incr = w0 * u + hist
        force = model.dF_all(u) - eta * f_star + lam_col * star
        return w0 * inner_sum(force, psi2) - inner_sum(f_star, incr)

    vacuous = not np.any(f_star)
    fold = False
    if vacuous:
        eta, iters = 1.0, 0
    else:
        scale = model.energy(phi)
        rep, fold = solve_balance_multiplier(
            residual, slope, multiplier_config(),
            abs_tol=1e-12 * (1.0 + abs(scale)), on_fold=on_fold,
        )
        eta, iters = rep.root, rep.iterations

    new = field(eta)
    ensure_finite(new)
    mu = -np.stack([g.apply(g.laplacian(), u) for u in new]) + eta * f_star - lam_col * star
    diss = -state.dt * inner_sum(mu, mu)
    e_new = partition_bdf2_energy(model, new, phi)
    lap = g.laplacian()
    s = new - phi if first else new - 2.0 * phi + prev
    jump = 0.25 * sum(-g.inner(g.apply(lap, sj), sj) for sj in s)
    rhs = (1.5 * diss if first else diss) - jump

    norms_new = model.norms(new)
    norms_bar = model.norms(bar)
    res = {}
    for j in range(model.m):
        res[f"H_bar_{j}"] = norms_bar[j] - state.H0[j]
    for j in range(model.m):
        res[f"H_{j}"] = norms_new[j] - state.H0[j]
    rep = StepReport(
        lam=lam.copy(),
        eta=eta,
        newton_iters=iters,
        energy_original=model.energy(new),
        energy_discrete=e_new,
        constraint_residuals=res,
        dissipation=diss,
        dissipation_residual=(e_new - state.energy) - rhs,
        extra={"eta_vacuous": vacuous, "eta_fold": fold, "surrogate_gap": float(np.max(np.abs(new - bar)))},
    )
    rep.check_finite()
    return state.advanced(new, lam=lam.copy(), energy=e_new), rep
