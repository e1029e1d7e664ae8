import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_scenario
from levy_ou.levy import LevyTriple
from levy_ou.solution import char_fn, mean_forcing, simulate_paths, transition_exponent, weak_residual

VAR1 = (1 - np.exp(-2)) / 2


def test_char_fn_at_zero(planar):
    assert char_fn(planar, 0.2, 1.4, [0.3, -0.1], [0.0, 0.0]) == 1


def test_char_fn_scalar_closed_form(brownian):
    val = char_fn(brownian, 0.0, 1.0, [0.0], [1.0])
    assert abs(val - np.exp(-(1 - np.exp(-2)) / 4)) < 1e-12
    assert abs(val - 0.8056014165577617) < 1e-12  # frozen


@given(st.floats(-3, 3), st.floats(0, 2), st.floats(0.05, 3), st.floats(-2, 2))
def test_char_fn_gaussian_formula(brownian, h, s, dur, x):
    t = s + dur
    exact = np.exp(1j * h * x * np.exp(-dur) - h * h * (1 - np.exp(-2 * dur)) / 4)
    assert abs(char_fn(brownian, s, t, [x], [h]) - exact) < 1e-10


def test_periodic_char_fn_matches_direct_quadrature(periodic):
    from scipy.integrate import quad
    s, t = 0.2, 1.9

    def U(a, b):
        return np.exp(-(a - b) + (np.cos(2 * np.pi * a) - np.cos(2 * np.pi * b)) / (4 * np.pi))

    h = 1.3
    var = quad(lambda r: U(t, r) ** 2, s, t, epsabs=1e-14)[0]
    exact = np.exp(1j * h * 0.4 * U(t, s) - h * h * var / 2)
    assert abs(char_fn(periodic, s, t, [0.4], [h]) - exact) < 1e-10


def test_mean_forcing_constant():
    sc = make_scenario(noise=LevyTriple([0.0], [[0.0]]), f=np.array([2.0]))
    np.testing.assert_allclose(mean_forcing(sc, 0.0, 1.0), [2 * (1 - np.exp(-1))], atol=1e-12)


def test_transition_exponent_vectorized(mixed_atoms):
    H = np.array([[0.5], [1.0], [-2.0]])
    batch = transition_exponent(mixed_atoms, 0.0, 1.5, H)
    single = [transition_exponent(mixed_atoms, 0.0, 1.5, h) for h in H]
    np.testing.assert_allclose(batch, single, atol=1e-14)


@given(st.floats(0.1, 3))
def test_char_fn_hermitian(mixed_atoms, h):
    a = char_fn(mixed_atoms, 0.0, 1.0, [0.3], [h])
    b = char_fn(mixed_atoms, 0.0, 1.0, [0.3], [-h])
    assert abs(a - np.conj(b)) < 1e-12
    assert abs(a) <= 1 + 1e-12


def test_zero_noise_paths_are_deterministic(zero_noise):
    ens = simulate_paths(zero_noise, 0.0, 1.0, [1.0], 1 / 64, 10, keep_paths=True)
    np.testing.assert_allclose(ens.terminal, np.exp(-1), atol=1e-12)
    np.testing.assert_allclose(ens.paths[:, :, 0], np.exp(-ens.times)[None, :].repeat(10, 0), atol=1e-12)


def test_scalar_ou_moments(brownian):
    ens = simulate_paths(brownian, 0.0, 1.0, [1.0], 1 / 1024, 20_000, seed=123)
    sd = ens.terminal[:, 0].std()
    assert abs(ens.mean()[0] - np.exp(-1)) < 3 * sd / np.sqrt(ens.n_paths)
    # left-endpoint sums carry an O(dt) variance bias on top of the MC error
    assert abs(ens.cov()[0, 0] - VAR1) < 4 * VAR1 * np.sqrt(2 / ens.n_paths) + 1e-3


def test_empirical_char_fn_within_three_se(mixed_atoms):
    ens = simulate_paths(mixed_atoms, 0.0, 1.0, [0.2], 1 / 512, 20_000, seed=9)
    H = np.array([[0.5], [1.0], [2.0]])
    emp, se = ens.empirical_char_fn(H)
    exact = char_fn(mixed_atoms, 0.0, 1.0, [0.2], H)
    assert np.all(np.abs(emp - exact) < 3 * se + 2e-3)


def test_seeded_reproducibility(brownian):
    a = simulate_paths(brownian, 0.0, 1.0, [0.0], 1 / 32, 5000, workers=3, seed=4)
    b = simulate_paths(brownian, 0.0, 1.0, [0.0], 1 / 32, 5000, workers=3, seed=4)
    c = simulate_paths(brownian, 0.0, 1.0, [0.0], 1 / 32, 5000, workers=3, seed=5)
    np.testing.assert_array_equal(a.terminal, b.terminal)
    assert not np.array_equal(a.terminal, c.terminal)


def test_full_paths_agree_with_terminal_sum(planar):
    ens = simulate_paths(planar, 0.0, 1.0, [0.5, -0.5], 1 / 64, 50, keep_paths=True, seed=1)
    np.testing.assert_allclose(ens.paths[:, -1], ens.terminal, atol=1e-12)


def test_simulation_rejects_coarse_grid(brownian):
    with pytest.raises(ValueError):
        simulate_paths(brownian, 0.0, 1.0, [0.0], 0.5, 10)


def test_weak_residual_zero_test_vector(brownian):
    ens = simulate_paths(brownian, 0.0, 1.0, [1.0], 1 / 64, 20, keep_paths=True, seed=2)
    np.testing.assert_array_equal(weak_residual(brownian, ens, [0.0]), 0.0)


def test_zero_noise_residual_first_order(zero_noise):
    res = []
    for dt in (1e-3, 5e-4):
        ens = simulate_paths(zero_noise, 0.0, 1.0, [1.0], dt, 1, keep_paths=True)
        res.append(abs(float(np.ravel(weak_residual(zero_noise, ens, [1.0]))[0])))
    assert res[0] < 5e-3
    assert 0.7 <= res[0] / res[1] / 2 <= 1.3


def test_centered_noisy_residual_unbiased(brownian):
    ens = simulate_paths(brownian, 0.0, 1.0, [0.0], 1 / 256, 10_000, keep_paths=True, seed=8)
    r = np.ravel(weak_residual(brownian, ens, [1.0]))
    assert abs(r.mean()) < 3 * r.std() / np.sqrt(r.size)
