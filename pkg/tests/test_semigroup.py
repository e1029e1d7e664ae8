import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levy_ou.fourier import FourierSeries
from levy_ou.inequalities import random_real_kfunction
from levy_ou.measures import esm_char_fn
from levy_ou.semigroup import (ExpTerm, KFunction, SpaceTimeMeasure, apply_P_tau, ergodic_average,
                               flow_defect, generator_fd_check, generator_L, modulation_defect,
                               two_param_apply, weak_limit_defect)
from levy_ou.solution import char_fn

SCENARIOS = ["brownian", "periodic", "mixed_atoms", "power_law", "planar"]


def probes(sc, n=12, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 2, n), rng.normal(size=(n, sc.dim))


def rand_u(sc, seed=0):
    return random_real_kfunction(np.random.default_rng(seed), sc.dim, sc.period)


# --- K-function algebra -------------------------------------------------------

def test_product_evaluates_pointwise(planar):
    u, v = rand_u(planar, 1), rand_u(planar, 2)
    t, x = probes(planar)
    np.testing.assert_allclose((u * v)(t, x), u(t, x) * v(t, x), atol=1e-12)
    np.testing.assert_allclose((u + v)(t, x), u(t, x) + v(t, x), atol=1e-12)


def test_real_part_mode():
    u = KFunction.exponential([1.0], mode="re")
    np.testing.assert_allclose(u([0.0, 0.0], [[0.3], [2.0]]), np.cos([0.3, 2.0]), atol=1e-15)


def test_gradient_matches_central_difference(planar):
    u = rand_u(planar, 3)
    t, x = probes(planar, 4)
    g = u.gradient(t, x)
    eps = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        fd = (u(t, x + e) - u(t, x - e)) / (2 * eps)
        np.testing.assert_allclose(g[:, k], fd, atol=1e-7)


# --- P_tau ------------------------------------------------------------------

def test_tau_zero_is_identity(periodic):
    u = rand_u(periodic)
    t, x = probes(periodic)
    np.testing.assert_allclose(apply_P_tau(periodic, u, 0.0)(t, x), u(t, x), atol=1e-14)


def test_scalar_ou_closed_form(brownian):
    u = KFunction.exponential([1.0])
    val = apply_P_tau(brownian, u, np.log(2))(0.0, [[0.0]])[0]
    assert abs(val - np.exp(-3 / 16)) < 1e-12
    assert abs(val - 0.829029118) < 1e-9


@given(st.floats(-2, 2), st.floats(0, 1), st.floats(0.01, 2))
def test_scalar_ou_closed_form_general(brownian, x, t, tau):
    u = KFunction.exponential([1.0])
    exact = np.exp(1j * x * np.exp(-tau) - (1 - np.exp(-2 * tau)) / 4)
    assert abs(apply_P_tau(brownian, u, tau)(t, [[x]])[0] - exact) < 1e-11


@pytest.mark.parametrize("name", SCENARIOS)
def test_semigroup_law(request, name):
    sc = request.getfixturevalue(name)
    u = rand_u(sc, 4)
    t, x = probes(sc, 8)
    two = apply_P_tau(sc, apply_P_tau(sc, u, 0.3), 0.45)(t, x)
    one = apply_P_tau(sc, u, 0.75)(t, x)
    np.testing.assert_allclose(two, one, atol=1e-10)


def test_P_tau_of_exponential_is_two_param_apply(periodic):
    h = np.array([0.8])
    val = apply_P_tau(periodic, KFunction.exponential(h, period=1.0), 0.6)(0.2, [[0.5]])[0]
    assert abs(val - two_param_apply(periodic, h, 0.2, 0.8, [0.5])) < 1e-12
    assert abs(val - char_fn(periodic, 0.2, 0.8, [0.5], h)) < 1e-12


def test_degenerate_two_param(planar):
    h, x = np.array([0.3, -0.4]), np.array([1.0, 2.0])
    assert abs(two_param_apply(planar, h, 0.5, 0.5, x) - np.exp(1j * h @ x)) < 1e-15


@pytest.mark.parametrize("name, tol", [("brownian", 1e-10), ("periodic", 1e-8), ("planar", 1e-8)])
def test_flow_defect(request, name, tol):
    sc = request.getfixturevalue(name)
    rng = np.random.default_rng(8)
    for _ in range(20):
        r, s, t = np.sort(rng.uniform(0, 3, 3))
        assert flow_defect(sc, r, s, t, rng.normal(size=sc.dim), rng.normal(size=sc.dim)) < tol


# --- generator --------------------------------------------------------------

def test_generator_of_constant_is_zero(planar):
    t, x = probes(planar)
    assert np.all(generator_L(planar, KFunction.constant(3.0, 2))(t, x) == 0)


def test_generator_frozen_values(brownian):
    u = KFunction.exponential([1.0])
    assert abs(generator_L(brownian, u)(0.0, [[0.0]])[0] - (-0.5)) < 1e-15
    phi = FourierSeries(1.0, 0.0, cos=[1.0])
    v = KFunction([ExpTerm.fourier(phi, FourierSeries(1.0, [1.0]))], 1, "complex")
    assert abs(generator_L(brownian, v)(0.25, [[0.0]])[0] - (-2 * np.pi)) < 1e-12


@pytest.mark.parametrize("name", SCENARIOS)
def test_finite_difference_first_order(request, name):
    sc = request.getfixturevalue(name)
    t, x = probes(sc, 6)
    rep = generator_fd_check(sc, rand_u(sc, 5), [1e-3, 5e-4], t, x)
    assert 1.7 <= rep["ratios"][0] <= 2.3


def test_finite_difference_of_constant(periodic):
    rep = generator_fd_check(periodic, KFunction.constant(1.0, 1), [1e-3, 5e-4], *probes(periodic))
    assert rep["errors"] == [0.0, 0.0]


@pytest.mark.parametrize("name", SCENARIOS)
def test_modulation_identity(request, name):
    sc = request.getfixturevalue(name)
    t, x = probes(sc)
    for k in (1, -2):
        assert modulation_defect(sc, rand_u(sc, 6), k, t, x) < 1e-10


@pytest.fixture(scope="module")
def stm_periodic(periodic):
    return SpaceTimeMeasure.build(periodic)


def test_space_time_integrates_exponentials_exactly(periodic, stm_periodic):
    h = np.array([0.9])
    val = stm_periodic.integrate(KFunction.exponential(h, mode="complex"))
    ts = np.arange(64) / 64
    assert abs(val - np.mean([esm_char_fn(periodic, r, h) for r in ts])) < 1e-10


@pytest.mark.parametrize("name", ["periodic", "mixed_atoms", "power_law"])
def test_generator_mean_zero(request, name):
    sc = request.getfixturevalue(name)
    stm = SpaceTimeMeasure.build(sc)
    for seed in range(3):
        assert abs(stm.integrate_L(rand_u(sc, seed))) < 1e-6


# --- ergodicity ---------------------------------------------------------------

def test_constant_average(brownian):
    rep = ergodic_average(brownian, [0.0], 0.0, [1.0], 12.0)
    np.testing.assert_allclose(rep["average"], 1.0, atol=1e-12)


def test_cesaro_limit(brownian):
    rep = ergodic_average(brownian, [1.0], 0.0, [0.5], 50.0)
    assert abs(rep["average"][-1] - np.exp(-0.25)) < 2e-2
    assert abs(rep["target"] - np.exp(-0.25)) < 1e-10


@pytest.mark.parametrize("name", ["brownian", "periodic", "mixed_atoms"])
def test_weak_limit(request, name):
    sc = request.getfixturevalue(name)
    defect, n = weak_limit_defect(sc, np.full(sc.dim, 1.0), 0.3, np.full(sc.dim, 2.0))
    assert defect < 1e-6
    assert sc.M_env * np.exp(-sc.omega * n * sc.period) < 1e-7
