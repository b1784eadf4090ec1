"""Energies, constraints and variational derivatives.

The Gateaux tests here gate every stepping test: a variational derivative
``dE`` must satisfy ``(dE(phi), v) = d/ds E(phi + s v)`` for random ``v``.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgflow.initial import random_smooth, two_circles_2d
from cgflow.models import (
    NegativeSAVError,
    PartitionModel,
    VesicleModel,
    double_well,
    generic_model,
)
from cgflow.spectral import Grid, GridMismatchError

from oracles import DenseGrid, PartitionFunctionals, VesicleFunctionals

GATEAUX_TOL = 1e-5
N_DIRECTIONS = 10


def gateaux_errors(energy, derivative, phi, grid, *, seed=0, h=1e-5, stacked=None):
    """Relative errors of ``(dE, v)`` against central differences for 10 directions.

    ``stacked=(j, m)`` perturbs only component ``j`` of a stacked field.
    """
    rng = np.random.default_rng(seed)
    out = []
    dE = derivative(phi)
    for _ in range(N_DIRECTIONS):
        v = random_smooth(
            grid, seed=int(rng.integers(2**31)), amplitude=1.0, mean=rng.standard_normal(), kmax=min(grid.shape) // 2 - 1
        )
        if stacked is not None:
            j, m = stacked
            pert = np.zeros((m,) + grid.shape)
            pert[j] = v
        else:
            pert = v
        fd = (energy(phi + h * pert) - energy(phi - h * pert)) / (2 * h)
        exact = grid.inner(dE, v)
        scale = max(abs(exact), abs(fd), 1e-300)
        out.append(abs(exact - fd) / scale)
    return out


# -- generic model ---------------------------------------------------------------


def test_generic_energy_examples():
    g = Grid((16, 16))
    x, _ = g.coords()
    m = generic_model(g, constraint="mass")
    assert m.energy(np.ones(g.shape)) == pytest.approx(0.0, abs=1e-14)
    m0 = generic_model(g, potential="zero")
    assert m0.energy(np.sin(x)) == pytest.approx(0.5 * 2 * math.pi * math.pi, rel=1e-12)


def test_modified_energy_examples():
    g = Grid((16, 16))
    x, _ = g.coords()
    m = generic_model(g)
    assert m.modified_energy(np.zeros(g.shape), 2.0) == pytest.approx(4.0)
    phi = random_smooth(g, seed=1, kmax=4)
    r = m.sav_variable(phi)
    assert m.modified_energy(phi, r) == pytest.approx(m.energy(phi) + m.C0, rel=1e-13)
    assert m.modified_energy(np.sin(x), 0.0) == pytest.approx(math.pi**2, rel=1e-12)


def test_generic_energy_matches_pointwise_quadrature():
    g = Grid((8, 8))
    dg = DenseGrid(g.shape)
    phi = random_smooth(g, seed=7, kmax=4, amplitude=0.9)
    kappa, eps = 0.7, 0.6
    m = generic_model(g, kappa=kappa, epsilon=eps)
    f = phi.ravel()
    direct = 0.5 * dg.inner(-kappa * (dg.lap @ f), f) + dg.integrate(double_well(f) / eps**2)
    assert m.energy(phi) == pytest.approx(direct, rel=1e-12)


def test_sav_positivity_guard():
    g = Grid((8, 8))
    m = generic_model(g, potential="zero", C0=1e-3)
    assert m.sav_variable(np.zeros(g.shape)) == pytest.approx(math.sqrt(1e-3))
    m_neg = generic_model(g)
    object.__setattr__(m_neg, "C0", -1.0)  # bypass the constructor check
    with pytest.raises(NegativeSAVError, match="C0"):
        m_neg.sav_variable(np.ones(g.shape))


def test_generic_model_validation():
    g = Grid((8, 8))
    with pytest.raises(ValueError):
        generic_model(g, mobility="viscous")
    with pytest.raises(ValueError):
        generic_model(g, constraint="volume")
    with pytest.raises(ValueError):
        generic_model(g, C0=0.0)
    with pytest.raises(ValueError):
        generic_model(g, epsilon=-1.0)


@pytest.mark.parametrize("constraint", ["mass", "norm", "area"])
def test_generic_constraint_gateaux(constraint):
    g = Grid((16, 16))
    m = generic_model(g, constraint=constraint, epsilon=0.5)
    phi = random_smooth(g, seed=3, kmax=5, amplitude=0.8, mean=0.1)
    errs = gateaux_errors(m.constraint_value, m.constraint_derivative, phi, g, seed=1)
    assert max(errs) <= GATEAUX_TOL, errs


def test_generic_energy_gateaux():
    g = Grid((16, 16))
    m = generic_model(g, epsilon=0.5, kappa=0.8)
    phi = random_smooth(g, seed=4, kmax=5, amplitude=0.8)
    errs = gateaux_errors(m.energy, lambda p: m.apply_L(p) + m.F_prime(p), phi, g, seed=2)
    assert max(errs) <= GATEAUX_TOL, errs


# -- vesicle -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def ves16():
    g = Grid((16, 16))
    return g, VesicleModel(g, 0.5)


def test_vesicle_constant_states():
    g = Grid((16, 16))
    eps = 6 * math.pi / 128
    m = VesicleModel(g, eps)
    one, zero = np.ones(g.shape), np.zeros(g.shape)
    for phi in (one, zero):
        assert m.bending_energy(phi) == 0.0
        assert m.Q_energy(phi) == 0.0
        assert np.all(m.dQ_dphi(phi) == 0.0)
        assert np.all(m.dH_dphi(phi) == 0.0)
    A, H = m.constraints(one)
    assert A == pytest.approx(g.volume) and H == 0.0
    A, H = m.constraints(zero)
    assert A == 0.0 and H == pytest.approx(g.volume / (4 * eps), rel=1e-14)


def test_vesicle_splitting_identity_smooth():
    g = Grid((64, 64))
    x, y = g.coords()
    m = VesicleModel(g, 1.0)
    phi = np.sin(x)
    split = m.biharmonic_energy(phi) + m.Q_energy(phi)
    assert split == pytest.approx(m.bending_energy(phi), rel=1e-8)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), eps=st.floats(0.3, 1.5))
def test_vesicle_splitting_identity_property(seed, eps):
    g = Grid((64, 64))
    m = VesicleModel(g, eps)
    phi = random_smooth(g, seed=seed, kmax=3, amplitude=0.9)
    eb = m.bending_energy(phi)
    assert abs(eb - (m.biharmonic_energy(phi) + m.Q_energy(phi))) <= 1e-8 * (1 + abs(eb))


def test_vesicle_pinned_values():
    g = Grid((64, 64))
    eps = 6 * math.pi / 128
    m = VesicleModel(g, eps)
    one = two_circles_2d(g, eps, radii=(0.28 * math.pi,), centers=((0.0, 0.0),))
    assert m.bending_energy(one) == pytest.approx(7620.2070508882925, rel=1e-10)
    two = two_circles_2d(g, eps)
    A, H = m.constraints(two)
    assert A == pytest.approx(-29.30664376074199, rel=1e-10)
    assert H == pytest.approx(10.347789251597508, rel=1e-10)
    assert two.min() >= -1.05 and two.max() <= 1.05


def test_vesicle_energy_matches_dense_functionals(ves16):
    g, m = ves16
    fn = VesicleFunctionals(DenseGrid(g.shape), m.epsilon, m.M)
    phi = random_smooth(g, seed=8, kmax=5, amplitude=0.9)
    f = phi.ravel()
    assert m.Q_energy(phi) == pytest.approx(fn.Q(f), rel=1e-11)
    assert m.area(phi) == pytest.approx(fn.H(f), rel=1e-11)
    assert np.allclose(m.dQ_dphi(phi).ravel(), fn.dQ(f), rtol=0, atol=1e-9 * np.max(np.abs(fn.dQ(f))))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_vesicle_dQ_gateaux(ves16, seed):
    g, m = ves16
    phi = random_smooth(g, seed=seed, kmax=5, amplitude=0.9)
    errs = gateaux_errors(m.Q_energy, m.dQ_dphi, phi, g, seed=seed + 10)
    assert max(errs) <= GATEAUX_TOL, errs


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_vesicle_dH_gateaux(ves16, seed):
    g, m = ves16
    phi = random_smooth(g, seed=seed, kmax=5, amplitude=0.9)
    errs = gateaux_errors(m.area, m.dH_dphi, phi, g, seed=seed + 20)
    assert max(errs) <= GATEAUX_TOL, errs


def test_vesicle_volume_gateaux(ves16):
    g, m = ves16
    phi = random_smooth(g, seed=5, kmax=5)
    errs = gateaux_errors(m.volume, lambda p: np.ones(g.shape), phi, g, seed=30)
    assert max(errs) <= GATEAUX_TOL


def test_vesicle_validation():
    g = Grid((8, 8))
    with pytest.raises(ValueError):
        VesicleModel(g, 0.0)
    with pytest.raises(ValueError):
        VesicleModel(g, 0.1, M=0.0)


# -- partition -----------------------------------------------------------------------


def test_partition_interaction_examples():
    g = Grid((16, 16))
    x, _ = g.coords()
    assert PartitionModel(g, 1, 0.1).interaction(np.ones((1,) + g.shape)) == 0.0
    m2 = PartitionModel(g, 2, 1.0)
    assert m2.interaction(np.ones((2,) + g.shape)) == pytest.approx(g.volume, rel=1e-14)
    left = (x < 0).astype(float)
    assert m2.interaction(np.stack([left, 1 - left])) == 0.0
    assert np.all(PartitionModel(g, 1, 0.1).dF_dphi(np.ones((1,) + g.shape), 0) == 0.0)
    phis = np.stack([np.sin(x), np.zeros(g.shape)])
    assert np.all(m2.dF_dphi(phis, 0) == 0.0)


def test_partition_energy_examples():
    g = Grid((16, 16))
    x, _ = g.coords()
    m = PartitionModel(g, 3, 0.05)
    assert m.energy(np.zeros((3,) + g.shape)) == 0.0
    assert PartitionModel(g, 1, 0.05).energy(np.sin(x)[None]) == pytest.approx(math.pi**2, rel=1e-12)


def test_partition_energy_matches_pointwise_quadrature():
    g = Grid((8, 8))
    dg = DenseGrid(g.shape)
    m = PartitionModel(g, 2, 0.3)
    phis = random_smooth(g, seed=9, kmax=3, components=2)
    fn = PartitionFunctionals(dg, 2, 0.3)
    flat = phis.reshape(2, -1)
    grad = 0.5 * sum(dg.inner(-(dg.lap @ p), p) for p in flat)
    assert m.energy(phis) == pytest.approx(grad + fn.F(flat), rel=1e-12)


@pytest.mark.parametrize("j", [0, 1, 2])
def test_partition_dF_gateaux(j):
    g = Grid((16, 16))
    m = PartitionModel(g, 3, 0.2)
    phis = random_smooth(g, seed=6, kmax=5, components=3)
    errs = gateaux_errors(m.interaction, lambda p: m.dF_dphi(p, j), phis, g, seed=40 + j, stacked=(j, 3))
    assert max(errs) <= GATEAUX_TOL, errs
    assert np.array_equal(m.dF_all(phis)[j], m.dF_dphi(phis, j))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 5), eps=st.floats(0.01, 2.0))
def test_partition_interaction_nonnegative(seed, m, eps):
    g = Grid((8, 8))
    model = PartitionModel(g, m, eps)
    phis = random_smooth(g, seed=seed, kmax=4, components=m, amplitude=2.0)
    val = model.interaction(phis)
    assert val >= 0.0
    pairs = sum(
        g.integrate(phis[i] ** 2 * phis[k] ** 2) for i in range(m) for k in range(i)
    )
    assert (val == 0.0) == (pairs == 0.0)


def test_partition_validation():
    g = Grid((8, 8))
    with pytest.raises(ValueError):
        PartitionModel(g, 0, 0.1)
    with pytest.raises(ValueError):
        PartitionModel(g, 2, 0.0)
    with pytest.raises(GridMismatchError):
        PartitionModel(g, 2, 0.1).energy(np.zeros((3, 8, 8)))
    with pytest.raises(IndexError):
        PartitionModel(g, 2, 0.1).dF_dphi(np.zeros((2, 8, 8)), 2)
