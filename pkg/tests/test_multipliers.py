"""Scalar and 2x2 multiplier solves, quadratic root selection and predictors."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cgflow.initial import random_smooth
from cgflow.models import generic_model
from cgflow.multipliers import (
    DegeneratePredictorError,
    MultiplierFailure,
    NewtonConfig,
    newton_2d,
    newton_scalar,
    solve_balance_multiplier,
    solve_constraint_quadratic,
)
from cgflow.spectral import Grid
from cgflow.steppers import (
    StabilizationParams,
    initial_generic_state,
    lambda_predictor_linear_sav,
    step_approach1,
    step_approach2_cn,
    step_linear_sav,
)
from cgflow.steppers.generic import _cn_split, _energy_residual, _sav_first_part, _sav_second_part

# -- newton_scalar ----------------------------------------------------------------


def test_newton_scalar_examples():
    rep = newton_scalar(lambda x: x * x - 1, lambda x: 2 * x, 0.9)
    assert rep.root == pytest.approx(1.0, abs=1e-14)
    assert rep.iterations <= 6
    rep = newton_scalar(lambda x: x - 3.25, lambda x: 1.0, -40.0)
    assert rep.root == 3.25 and rep.iterations == 1


def test_newton_scalar_numeric_derivative():
    rep = newton_scalar(lambda x: math.exp(x) - 2.0, None, 0.0)
    assert rep.root == pytest.approx(math.log(2.0), abs=1e-12)


def test_newton_scalar_failure_carries_trace():
    with pytest.raises(MultiplierFailure) as info:
        newton_scalar(lambda x: x * x + 1.0, lambda x: 2 * x, 0.5, NewtonConfig(max_iters=5), name="lambda")
    assert info.value.multiplier == "lambda"
    assert len(info.value.trace) >= 2
    assert "reduce dt" in str(info.value)


def test_newton_scalar_bracket_fallback():
    # Newton cycles between +-1 on this residual; the bracket search finds the root
    f = lambda x: math.copysign(abs(x) ** (1 / 3), x)  # noqa: E731
    rep = newton_scalar(f, None, 1.0, NewtonConfig(max_iters=10))
    assert abs(rep.root) < 1e-12
    assert rep.method == "bracket"


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(1e-3, 1e3),
    b=st.floats(1e-3, 1e3),
    x0=st.floats(-50.0, 50.0),
    guess=st.floats(-50.0, 50.0),
)
def test_newton_scalar_monotone_cubics(a, b, x0, guess):
    rep = newton_scalar(lambda x: a * (x - x0) ** 3 + b * (x - x0), lambda x: 3 * a * (x - x0) ** 2 + b, guess)
    scale = abs(a * (guess - x0) ** 3 + b * (guess - x0))
    assert abs(a * (rep.root - x0) ** 3 + b * (rep.root - x0)) <= 1e-14 + 1e-12 * scale


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iters=0)


# -- newton_2d ----------------------------------------------------------------------


def test_newton_2d_examples():
    affine = lambda x, y: (x + y - 2, x - y)  # noqa: E731
    rep = newton_2d(affine, (0.0, 0.0), jacobian=lambda x, y: np.array([[1.0, 1.0], [1.0, -1.0]]))
    assert np.allclose(rep.root, (1.0, 1.0), atol=1e-14) and rep.iterations == 1
    # central differences carry ~1e-9 rounding, so one extra iteration is allowed
    rep = newton_2d(affine, (0.0, 0.0))
    assert np.allclose(rep.root, (1.0, 1.0), atol=1e-14) and rep.iterations <= 2
    rep = newton_2d(lambda x, y: (x * x - 1, y - x), (0.9, 0.9))
    assert np.allclose(rep.root, (1.0, 1.0), atol=1e-13)


def test_newton_2d_singular_jacobian():
    with pytest.raises(MultiplierFailure, match="singular"):
        newton_2d(lambda x, y: (x + y - 1, 2 * x + 2 * y - 3), (0.0, 0.0))


def _approach2_setup(seed=2, dt=1e-3):
    g = Grid((8, 8))
    m = generic_model(g, constraint="norm", epsilon=0.8, kappa=0.5)
    phi0 = random_smooth(g, seed=seed, kmax=3, amplitude=0.6, mean=0.2)
    state = initial_generic_state(m, phi0, dt)
    state, _ = step_approach2_cn(state, m)
    return g, m, state


def test_approach2_pair_matches_grid_scan():
    """200x200 scan of the (eta, lambda) system, then polish with numeric Jacobians."""
    g, m, state = _approach2_setup()
    new, rep = step_approach2_cn(state, m)
    s = _cn_split(state, m, StabilizationParams())
    combine, res_F, _, _ = _energy_residual(m, s, state.phi, None, None)
    con = m.constraint

    def residuals(eta, lam):
        return (con.value(combine(eta, lam)) - state.H0, res_F(eta, lam))

    etas = np.linspace(0.5, 1.5, 200)
    lams = np.linspace(-2.0, 2.0, 200)
    E, Lm = np.meshgrid(etas, lams, indexing="ij")
    fields = (
        s.phi1[None, None] + E[..., None, None] * s.phi2[None, None] + Lm[..., None, None] * s.phi3[None, None]
    )
    H = g.cell_volume * np.sum(fields**2, axis=(-2, -1)) - state.H0
    a = fields - state.phi
    F = g.cell_volume * np.sum(m.potential(fields), axis=(-2, -1)) - m.nonlinear_energy(state.phi)
    F = F - E * g.cell_volume * np.sum(s.b * a, axis=(-2, -1)) + Lm * g.cell_volume * np.sum(s.d * a, axis=(-2, -1))
    score = np.maximum(np.abs(H) / (1 + abs(state.H0)), np.abs(F) / (1 + abs(m.energy(state.phi))))
    i, j = np.unravel_index(np.argmin(score), score.shape)
    polished = newton_2d(residuals, (etas[i], lams[j]), abs_tol=1e-13)
    assert polished.root[0] == pytest.approx(rep.eta, abs=1e-8)
    assert polished.root[1] == pytest.approx(rep.lam, abs=1e-8 * max(1.0, abs(rep.lam)))


# -- quadratic ----------------------------------------------------------------------


def test_quadratic_examples():
    assert solve_constraint_quadratic(0.0, 2.0, -4.0, 123.0) == 2.0
    # roots 0.1 and 50
    assert solve_constraint_quadratic(1.0, -50.1, 5.0, 0.12) == pytest.approx(0.1, rel=1e-14)
    assert solve_constraint_quadratic(1.0, 0.0, -4.0, -1.9) == pytest.approx(-2.0)


def test_quadratic_errors():
    with pytest.raises(MultiplierFailure, match="no real root"):
        solve_constraint_quadratic(1.0, 0.0, 4.0, 0.0)
    with pytest.raises(MultiplierFailure, match="degenerate"):
        solve_constraint_quadratic(0.0, 0.0, 1.0, 0.0)


def _roots_quadratic(r1, r2, lead):
    return lead, -lead * (r1 + r2), lead * r1 * r2


@settings(max_examples=200, deadline=None)
@given(
    r1=st.floats(-1e3, 1e3),
    r2=st.floats(-1e3, 1e3),
    lead=st.floats(0.01, 100.0),
    k=st.integers(-30, 30),
    sign=st.sampled_from([-1.0, 1.0]),
    predictor=st.floats(-1e3, 1e3),
)
def test_quadratic_power_of_two_scaling_is_exact(r1, r2, lead, k, sign, predictor):
    a, b, c = _roots_quadratic(r1, r2, lead)
    # power-of-two scaling is exact only while products stay clear of subnormals
    assume(all(x == 0.0 or abs(x) > 1e-100 for x in (a, b, c)))
    s = sign * 2.0**k
    base = solve_constraint_quadratic(a, b, c, predictor)
    assert solve_constraint_quadratic(s * a, s * b, s * c, predictor) == base


@settings(max_examples=200, deadline=None)
@given(
    r1=st.floats(-1e3, 1e3),
    r2=st.floats(-1e3, 1e3),
    lead=st.floats(0.01, 100.0),
    s=st.floats(-1e6, 1e6).filter(lambda v: abs(v) > 1e-6),
    predictor=st.floats(-1e3, 1e3),
)
def test_quadratic_scale_invariance(r1, r2, lead, s, predictor):
    # a nearly double root is ill-conditioned (sqrt(eps) sensitivity); keep roots apart
    assume(abs(r1 - r2) > 1e-3 * (1.0 + abs(r1) + abs(r2)))
    assume(abs(abs(r1 - predictor) - abs(r2 - predictor)) > 1e-6 * (1.0 + abs(r1) + abs(r2)))
    a, b, c = _roots_quadratic(r1, r2, lead)
    base = solve_constraint_quadratic(a, b, c, predictor)
    scaled = solve_constraint_quadratic(s * a, s * b, s * c, predictor)
    assert scaled == pytest.approx(base, rel=1e-10, abs=1e-10 * (abs(r1) + abs(r2)))


@settings(max_examples=100, deadline=None)
@given(r=st.floats(-1e3, 1e3), lead=st.floats(0.01, 100.0), s=st.floats(0.1, 10.0))
def test_quadratic_double_root_is_found(r, lead, s):
    assume(r == 0.0 or abs(r) > 1e-100)  # r^2 must not be subnormal
    a, b, c = _roots_quadratic(r, r, lead)
    x = solve_constraint_quadratic(s * a, s * b, s * c, r)
    assert x == pytest.approx(r, rel=1e-6, abs=1e-6)


# -- balance multiplier -------------------------------------------------------------------


def test_balance_multiplier_regular_root():
    rep, fold = solve_balance_multiplier(lambda e: (e - 1.0) * (e - 3.0) + 1e-3 * (e - 1.0), None)
    assert not fold and rep.root == pytest.approx(1.0, abs=1e-12)


def test_balance_multiplier_fold():
    residual = lambda e: (e - 1.1) ** 2 + 1e-4  # noqa: E731
    rep, fold = solve_balance_multiplier(residual, lambda e: 2 * (e - 1.1))
    assert fold and rep.method == "fold-minimum"
    assert rep.root == pytest.approx(1.1, abs=1e-5)
    with pytest.raises(MultiplierFailure):
        solve_balance_multiplier(residual, lambda e: 2 * (e - 1.1), on_fold="raise")
    with pytest.raises(ValueError):
        solve_balance_multiplier(residual, None, on_fold="ignore")


# -- predictors -------------------------------------------------------------------------


def test_predictor_degenerate():
    g = Grid((8, 8))
    m = generic_model(g, constraint="norm")
    state = initial_generic_state(m, np.zeros(g.shape), 1e-3, sav=True)
    with pytest.raises(DegeneratePredictorError):
        lambda_predictor_linear_sav(state, m)


def test_predictor_steady_state():
    g = Grid((8, 8))
    m = generic_model(g, potential="zero", constraint="mass")
    state = initial_generic_state(m, np.full(g.shape, 0.3), 1e-2, sav=True)
    assert lambda_predictor_linear_sav(state, m) == 0.0
    new, rep = step_linear_sav(state, m)
    assert rep.lam == 0.0
    assert np.array_equal(new.phi, state.phi)
    assert new.r == state.r


def test_approach1_root_matches_closed_form_quadratic():
    g = Grid((8, 8))
    m = generic_model(g, constraint="norm", epsilon=0.8, kappa=0.5)
    phi0 = random_smooth(g, seed=4, kmax=3, amplitude=0.6, mean=0.2)
    state = initial_generic_state(m, phi0, 1e-2, sav=True)
    split = _sav_first_part(state, m)
    d = m.constraint_derivative(state.phi)
    phi2, _ = _sav_second_part(state, m, split, d)
    a = g.inner(phi2, phi2)
    b = 2.0 * g.inner(split.phi1, phi2)
    c = g.inner(split.phi1, split.phi1) - state.H0
    pred = lambda_predictor_linear_sav(state, m)
    closed = solve_constraint_quadratic(a, b, c, pred)
    _, rep = step_approach1(state, m)
    assert rep.lam == pytest.approx(closed, rel=1e-10, abs=1e-13)


def test_predictor_continuity():
    g = Grid((16, 16))
    m = generic_model(g, constraint="norm", epsilon=0.5)
    phi0 = random_smooth(g, seed=1, kmax=4, amplitude=0.7, mean=0.3)
    gaps = []
    for dt in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
        state = initial_generic_state(m, phi0, dt, sav=True)
        pred = lambda_predictor_linear_sav(state, m)
        _, rep = step_approach1(state, m)
        gaps.append(abs(rep.lam - pred))
    assert all(b < a for a, b in zip(gaps, gaps[1:])), gaps
