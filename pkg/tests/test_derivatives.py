import math
from fractions import Fraction as F

import numpy as np
import pytest

from hermiteqi.derivatives import (
    QuadratureError,
    QuadratureSpec,
    convolution_oracle,
    differentiate_generator,
    evaluate_qi_derivative,
)
from hermiteqi.interpolant import QIConfig, evaluate_qi, sample_on_window
from hermiteqi.moments import QPolynomial, build_hermite_generator
from hermiteqi.saturation import epsilon_bound
from hermiteqi.testfunctions import cosine, linear, polynomial, sine


def test_first_derivative_of_gaussian():
    H = build_hermite_generator(QPolynomial.unit(1, 2))
    G = differentiate_generator(H, (1,))
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(G(x), -2 * x * np.exp(-x * x) / math.sqrt(math.pi), atol=1e-15)
    assert G.degree == 1


def test_repeated_equals_combined():
    H = build_hermite_generator(QPolynomial(1, 4, {(0,): 1, (1,): F(1, 2)}))
    once = differentiate_generator(differentiate_generator(H, (1,)).generator, (1,))
    assert once.generator.coeffs == differentiate_generator(H, (2,)).generator.coeffs


def test_mixed_partials_commute():
    H = build_hermite_generator(QPolynomial(2, 3, {(0, 0): 1, (1, 0): F(1, 4), (0, 1): F(-1, 2)}))
    a = differentiate_generator(differentiate_generator(H, (1, 0)).generator, (0, 1))
    b = differentiate_generator(differentiate_generator(H, (0, 1)).generator, (1, 0))
    assert a.generator.coeffs == b.generator.coeffs == differentiate_generator(H, (1, 1)).generator.coeffs


def test_derived_generator_vs_finite_differences(rng):
    Q = QPolynomial.random(2, 4, rng)
    H = build_hermite_generator(Q)
    G = differentiate_generator(H, (2, 1))
    assert G.degree == H.degree + 3
    e = 1e-3  # mixed third difference; error O(e^2)
    for x in rng.uniform(-1.5, 1.5, (5, 2)):
        def f(dx, dy):
            return float(H(x + np.array([dx, dy])))
        d2x = lambda dy: (f(e, dy) - 2 * f(0, dy) + f(-e, dy)) / e ** 2
        fd = (d2x(e) - d2x(-e)) / (2 * e)
        assert float(G(x)) == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_derived_generator_zero_integral():
    H = build_hermite_generator(QPolynomial.unit(2, 4))
    for beta in [(1, 0), (0, 1), (1, 1), (2, 1), (0, 3)]:
        assert differentiate_generator(H, beta).integral() == 0


def test_order_limit_and_dimension():
    H = build_hermite_generator(QPolynomial.unit(1, 2))
    with pytest.raises(ValueError):
        differentiate_generator(H, (4,))
    with pytest.raises(ValueError):
        differentiate_generator(H, (1, 0))


def test_operator_identity_vs_central_difference():
    Q = QPolynomial(1, 4, {(0,): 1, (1,): F(1, 2)})
    H = build_hermite_generator(Q)
    h, D = 0.1, 2.0
    cfg = QIConfig(h, D, 4)
    d = sample_on_window(sine().closures(list(Q.coeffs)), h, [(-4, 4)])
    x = np.linspace(-1, 1, 9)
    e = 1e-6
    fd = (evaluate_qi(H, Q, d, cfg, x + e) - evaluate_qi(H, Q, d, cfg, x - e)) / (2 * e)
    got = evaluate_qi_derivative(H, Q, d, cfg, x, (1,))
    assert np.max(np.abs(got - fd)) <= 1e-5 * np.max(np.abs(got))


def test_derivative_order_for_sin():
    Q = QPolynomial.unit(1, 2)
    H = build_hermite_generator(Q)
    x = np.linspace(-1, 1, 41)
    errs = []
    for h in (0.2, 0.1, 0.05):
        d = sample_on_window(sine().closures([(0,)]), h, [(-4, 4)])
        errs.append(np.max(np.abs(evaluate_qi_derivative(H, Q, d, QIConfig(h, 2.0, 2), x, (1,)) - np.cos(x))))
    slopes = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(slopes - 2) <= 0.4)


def test_derivative_of_linear_is_constant_up_to_ripple():
    Q = QPolynomial.unit(1, 2)
    H = build_hermite_generator(Q)
    h, D = 0.1, 2.0
    d = sample_on_window(linear().closures([(0,)]), h, [(-4, 4)])
    x = np.linspace(-0.5, 0.5, 41)
    got = evaluate_qi_derivative(H, Q, d, QIConfig(h, D), x, (1,))
    G = differentiate_generator(H, (1,)).generator
    ripple = epsilon_bound(H, Q, D).per_alpha[(0,)] + epsilon_bound(G, QPolynomial.unit(1, 2), D).per_alpha[(0,)]
    ripple *= 1 + 1 / (h * math.sqrt(D))
    assert np.max(np.abs(got - 1)) <= ripple
    assert np.max(np.abs(got - 1)) > 0


def _derivs(u):
    return lambda g, y: u.deriv(g, y)


@pytest.mark.parametrize("Q", [QPolynomial.unit(1, 4), QPolynomial(1, 4, {(0,): 1, (1,): F(1, 2), (3,): F(-1, 4)}),
                               QPolynomial(2, 3, {(0, 0): 1, (1, 1): F(1, 4)})])
def test_convolution_reproduces_polynomials(Q):
    H = build_hermite_generator(Q)
    u = polynomial(Q.N - 1, Q.n)
    x = np.array([[0.3] * Q.n, [-0.7] * Q.n])
    res = convolution_oracle(H, Q, _derivs(u), 0.2, x, QuadratureSpec(order=10, panels=8))
    np.testing.assert_allclose(res.value, u(x), atol=1e-11)


def test_convolution_constant():
    Q = QPolynomial(1, 3, {(0,): 1, (1,): F(-1, 2)})
    H = build_hermite_generator(Q)
    one = lambda g, y: np.ones(len(y)) if sum(g) == 0 else np.zeros(len(y))
    assert convolution_oracle(H, Q, one, 0.3, [[0.1]]).value[0] == pytest.approx(1, abs=1e-12)


def test_convolution_commutes_with_derivative():
    Q = QPolynomial.unit(1, 4)
    H = build_hermite_generator(Q)
    u = cosine()
    delta, x, e = 0.3, 0.4, 1e-4
    c = lambda p: convolution_oracle(H, Q, _derivs(u), delta, [[p]]).value[0]
    fd = (c(x + e) - c(x - e)) / (2 * e)
    du = lambda g, y: u.deriv((g[0] + 1,), y)
    assert convolution_oracle(H, Q, du, delta, [[x]]).value[0] == pytest.approx(fd, abs=1e-6)


def test_convolution_nonconvergence_raises():
    Q = QPolynomial.unit(1, 2)
    H = build_hermite_generator(Q)
    wild = lambda g, y: np.cos(400 * y[:, 0])
    with pytest.raises(QuadratureError, match="panels"):
        convolution_oracle(H, Q, wild, 1.0, [[0.0]], QuadratureSpec(order=4, panels=2, max_refinements=1))


def test_qi_minus_convolution_is_saturation_for_cos():
    # M u - C_delta u with delta = h sqrt(D) carries only the lattice (saturation) part
    Q = QPolynomial.unit(1, 4)
    H = build_hermite_generator(Q)
    D = 2.0
    b = epsilon_bound(H, Q, D)
    for h in (0.2, 0.1, 0.05):
        cfg = QIConfig(h, D, 4)
        d = sample_on_window(cosine().closures([(0,)]), h, [(-4, 4)])
        x = np.array([[0.0], [0.37]])
        diff = evaluate_qi(H, Q, d, cfg, x) - convolution_oracle(H, Q, _derivs(cosine()), cfg.scale, x).value
        assert np.max(np.abs(diff)) <= b.floor(cfg.scale, lambda g: 1.0)
