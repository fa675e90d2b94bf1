import numpy as np
import pytest

from hermiteqi.testfunctions import (
    b_harmonic_quadratic,
    cosine,
    exp_cos_2d,
    linear,
    operator_power,
    polynomial,
    resolve,
    sine,
    transformed_exp_cos,
)


def test_operator_power_laplacian_squared():
    assert operator_power(np.eye(2), 2) == {(4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0}


@pytest.mark.parametrize("u,ref,dref", [(cosine(), np.cos, lambda x: -np.sin(x)), (sine(), np.sin, np.cos)])
def test_trig(u, ref, dref):
    x = np.linspace(-2, 2, 11)
    np.testing.assert_allclose(u(x), ref(x), atol=1e-15)
    np.testing.assert_allclose(u.deriv((1,), x), dref(x), atol=1e-15)
    np.testing.assert_allclose(u.laplacian(1, x), -ref(x), atol=1e-15)


def test_exp_cos_harmonic_and_extension():
    u = exp_cos_2d()
    assert u.is_harmonic
    x = np.array([[0.3, -0.2], [1.0, 2.0]])
    np.testing.assert_allclose(u(x), np.exp(x[:, 0]) * np.cos(x[:, 1]))
    np.testing.assert_allclose(u.laplacian(1, x), 0, atol=1e-14)
    z = x + 1j * np.array([0.4, -0.1])
    np.testing.assert_allclose(u.extension(z), np.exp(z[:, 0]) * np.cos(z[:, 1]))


def test_b_harmonic_functions():
    B = np.array([[2.0, 1.0], [1.0, 2.0]])
    x = np.array([[0.3, -0.2], [1.0, 2.0]])
    q = b_harmonic_quadratic(B)
    np.testing.assert_allclose(q(x), 2 * x[:, 0] ** 2 - 2 * x[:, 1] ** 2)
    q.B = B
    np.testing.assert_allclose(q.operator(B, 1, x), 0, atol=1e-14)
    C = np.linalg.cholesky(np.linalg.inv(B)).T
    t = transformed_exp_cos(C)
    xi = x @ C.T
    np.testing.assert_allclose(t(x), np.exp(xi[:, 0]) * np.cos(xi[:, 1]))
    np.testing.assert_allclose(t.operator(B, 1, x), 0, atol=1e-13)


def test_polynomial_derivatives():
    p = polynomial(3, 2)
    x = np.array([[0.2, 0.4]])
    e = 1e-6
    fd = (p(x + [e, 0]) - p(x - [e, 0])) / (2 * e)
    np.testing.assert_allclose(p.deriv((1, 0), x), fd, rtol=1e-8)
    assert np.all(p.deriv((2, 2), x) == 0)
    assert linear(2)(np.array([[3.0, 5.0]]))[0] == 3.0


def test_longdouble_values():
    x = np.array([[0.1, 0.2]], dtype=np.longdouble)
    assert exp_cos_2d()(x).dtype == np.longdouble


def test_resolve():
    assert resolve("poly:2").degree == 2
    with pytest.raises(KeyError):
        resolve("nope")
    with pytest.raises(ValueError):
        resolve("sin", 2)
