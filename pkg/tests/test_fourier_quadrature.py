import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sp_integrate

from levy_ou.fourier import FourierSeries
from levy_ou.quadrature import QuadratureError, gauss_jacobi_left, gauss_legendre, integrate


def test_series_evaluation_and_derivative():
    f = FourierSeries(2.0, 1.0, cos=[0.5], sin=[0.0, 2.0])
    t = np.array([0.0, 0.3, 1.1])
    expected = 1 + 0.5 * np.cos(np.pi * t) + 2 * np.sin(2 * np.pi * t)
    np.testing.assert_allclose(f(t), expected, atol=1e-15)
    d_expected = -0.5 * np.pi * np.sin(np.pi * t) + 4 * np.pi * np.cos(2 * np.pi * t)
    np.testing.assert_allclose(f.derivative()(t), d_expected, atol=1e-13)


@given(st.floats(-5, 5), st.integers(-3, 3))
def test_series_is_periodic(t, k):
    f = FourierSeries(1.5, [[1.0, 0.0], [0.0, 2.0]], cos=[[[0.1, 0.2], [0.3, 0.4]]])
    np.testing.assert_allclose(f(t + 1.5 * k), f(t), atol=1e-12)


def test_constant_and_zero_flags():
    assert FourierSeries(1.0, [1.0, 2.0]).is_constant
    assert FourierSeries(1.0, [0.0], cos=[[0.0]]).is_zero
    assert not FourierSeries(1.0, 0.0, sin=[1.0]).is_zero


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(5)
    assert abs(w @ x ** 8 - 2 / 9) < 1e-14


def test_gauss_jacobi_handles_endpoint_singularity():
    # int_0^1 x^(-1/2) cos x dx against scipy's algebraic-weight quadrature
    x, w = gauss_jacobi_left(20, -0.5)
    approx = w @ np.cos(x)
    ref = sp_integrate.quad(np.cos, 0, 1, weight="alg", wvar=(-0.5, 0))[0]
    assert abs(approx - ref) < 1e-13


@pytest.mark.parametrize("func, a, b, exact", [
    (np.exp, 0.0, 1.0, np.e - 1),
    (lambda x: np.abs(x - 0.3), 0.0, 1.0, 0.29),
    (lambda x: np.sin(50 * x), 0.0, np.pi, 0.0),
])
def test_adaptive_integrate(func, a, b, exact):
    assert abs(integrate(func, a, b, tol=1e-12) - exact) < 1e-10


def test_adaptive_integrate_vector_valued():
    val = integrate(lambda x: np.stack([x, x ** 2], axis=-1), 0.0, 2.0)
    np.testing.assert_allclose(val, [2.0, 8 / 3], atol=1e-13)


def test_adaptive_integrate_reports_failure():
    with pytest.raises(QuadratureError):
        integrate(lambda x: 1.0 / np.sqrt(np.abs(x - 0.5) + 1e-300), 0.0, 1.0, tol=1e-14, max_rounds=3)
