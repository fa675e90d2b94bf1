import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from hermiteqi.moments import (
    GeneratingFunction,
    MomentMatrix,
    QPolynomial,
    anisotropy_factor,
    build_general_generator,
    build_hermite_generator,
    fourier_derivative,
    gaussian_inverse_fourier_table,
    laguerre_generator_value,
    quadrature_moments,
    target_moments,
    verify_moment_conditions,
)


def series_inverse(Q):
    """Coefficients of the truncated power series 1/Q(t): independent route to Ainv[0, .]."""
    out = {}
    for beta in Q.index_set:
        if sum(beta) == 0:
            out[beta] = F(1)
            continue
        acc = F(0)
        for alpha, c in out.items():
            g = tuple(b - a for a, b in zip(alpha, beta))
            if min(g) >= 0 and sum(g) > 0:
                acc += Q[g] * c
        out[beta] = -acc
    return out


def test_qpolynomial_validation():
    with pytest.raises(ValueError):
        QPolynomial(1, 2, {(0,): 2})
    with pytest.raises(ValueError):
        QPolynomial(1, 2, {(0,): 1, (2,): 1})
    with pytest.raises(ValueError):
        QPolynomial(2, 2, {(0,): 1})
    Q = QPolynomial(2, 3, {"0,0": 1, "1,0": F(1, 2), "0,1": 0})
    assert Q.coeffs == {(0, 0): 1, (1, 0): F(1, 2)}
    assert QPolynomial.from_record(Q.to_record()) == Q


def test_moment_matrix_one_dim_closed_form():
    a1, a2, a3 = F(1, 3), F(-1, 2), F(1, 4)
    Q = QPolynomial(1, 4, {(0,): 1, (1,): a1, (2,): a2, (3,): a3})
    A = MomentMatrix(Q)
    row = A.first_row_inverse()
    assert row[(1,)] == -a1
    assert row[(2,)] == a1 ** 2 - a2
    assert row[(3,)] == -a1 ** 3 + 2 * a1 * a2 - a3
    assert np.allclose(A.as_array() @ A.inverse_array(), np.eye(4))


def test_moment_matrix_unit_upper_triangular(rng):
    Q = QPolynomial.random(2, 4, rng)
    A = MomentMatrix(Q).as_array()
    assert np.allclose(np.diag(A), 1) and np.allclose(np.tril(A, -1), 0)


@pytest.mark.parametrize("seed", range(6))
def test_first_row_inverse_matches_series_inverse(seed):
    rng = np.random.default_rng(seed)
    n, N = 1 + seed % 3, 2 + seed % 4
    Q = QPolynomial.random(n, N, rng)
    assert MomentMatrix(Q).first_row_inverse() == series_inverse(Q)


def test_target_moments_scale_by_factorial():
    Q = QPolynomial(1, 3, {(0,): 1, (1,): F(1, 2)})
    assert target_moments(Q)[(2,)] == 2 * F(1, 4)


def test_example1_generator():
    # N = 2: H = pi^{-n/2} (1 - 2 sum a_beta x^beta) e^{-|x|^2}; H_1 = 2x so c_{e_j} = -a_j
    Q = QPolynomial(2, 2, {(0, 0): 1, (1, 0): F(1, 4), (0, 1): F(-1, 2)})
    H = build_hermite_generator(Q)
    assert H.coeffs == {(0, 0): 1, (1, 0): F(-1, 4), (0, 1): F(1, 2)}


def test_example2_generators():
    # Q = 1, N = 4: pi^{-1/2} (3/2 - x^2) e^{-x^2}; H_2 = 4x^2 - 2
    H = build_hermite_generator(QPolynomial.unit(1, 4))
    assert H.coeffs == {(0,): 1, (2,): F(-1, 4)}
    # a1 = 1/2: pi^{-1/2} (1 - x) e^{-x^2}
    H = build_hermite_generator(QPolynomial(1, 4, {(0,): 1, (1,): F(1, 2)}))
    assert H.coeffs == {(0,): 1, (1,): F(-1, 2)}
    # a1 = -1/2: pi^{-1/2} (1 + x) e^{-x^2}
    H = build_hermite_generator(QPolynomial(1, 4, {(0,): 1, (1,): F(-1, 2)}))
    assert H.coeffs == {(0,): 1, (1,): F(1, 2)}
    # a2 = -1/4: the plain Gaussian
    H = build_hermite_generator(QPolynomial(1, 4, {(0,): 1, (2,): F(-1, 4)}))
    assert H.coeffs == {(0,): 1}


@pytest.mark.parametrize("seed", range(5))
def test_example2_general_cubic_form(seed):
    # generator for N = 4 in monomials: (3/2 - 2 A2) + (5 A1 - 12 A3) x + (4 A2 - 1) x^2 + (8 A3 - 2 A1) x^3
    # (constant term 3/2 - 2 A2 is what the normalization int H = 1 requires)
    rng = np.random.default_rng(seed)
    Q = QPolynomial(1, 4, {(0,): 1, (1,): F(int(rng.integers(-4, 5)), 4), (2,): F(int(rng.integers(-4, 5)), 4),
                           (3,): F(int(rng.integers(-4, 5)), 4)})
    row = MomentMatrix(Q).first_row_inverse()
    A1, A2, A3 = row[(1,)], row[(2,)], row[(3,)]
    H = build_hermite_generator(Q)
    c = [H.coefficient((k,)) for k in range(4)]
    # Hermite to monomial: H0 = 1, H1 = 2x, H2 = 4x^2 - 2, H3 = 8x^3 - 12x
    mono = [c[0] - 2 * c[2], 2 * c[1] - 12 * c[3], 4 * c[2], 8 * c[3]]
    assert mono == [F(3, 2) - 2 * A2, 5 * A1 - 12 * A3, 4 * A2 - 1, 8 * A3 - 2 * A1]


def test_radial_example_multi_dim():
    # a_{2e_j} = a: H_a = (1 + n(2a + 1/2) - (1 + 4a)|x|^2) e^{-|x|^2} pi^{-n/2}
    a, n = F(1, 8), 2
    Q = QPolynomial(n, 4, {(0, 0): 1, (2, 0): a, (0, 2): a})
    H = build_hermite_generator(Q)
    x = np.array([[0.3, -0.7], [1.1, 0.2], [0.0, 0.0]])
    r2 = np.sum(x * x, axis=1)
    ref = (1 + n * (2 * float(a) + 0.5) - (1 + 4 * float(a)) * r2) * np.exp(-r2) / math.pi
    np.testing.assert_allclose(H(x), ref, rtol=1e-14)


@pytest.mark.parametrize("n,M", [(1, 1), (1, 2), (1, 3), (1, 4), (2, 2), (2, 3), (3, 2), (3, 4)])
def test_unit_q_is_laguerre_generator(n, M, rng):
    H = build_hermite_generator(QPolynomial.unit(n, 2 * M))
    x = rng.normal(size=(100, n))
    np.testing.assert_allclose(H(x), laguerre_generator_value(n, M, x), rtol=1e-12, atol=1e-13)


def test_laplacian_q_gives_gaussian():
    for n, M in [(1, 2), (2, 3), (3, 2)]:
        H = build_hermite_generator(QPolynomial.laplacian(n, M))
        assert H.coeffs == {(0,) * n: 1}


@pytest.mark.parametrize("seed", range(10))
def test_moment_conditions_closed_form_and_quadrature(seed):
    rng = np.random.default_rng(100 + seed)
    Q = QPolynomial.random(1 + seed % 3, 2 + seed % 5, rng)
    H = build_hermite_generator(Q)
    closed = verify_moment_conditions(H, Q, tol=1e-10)
    assert closed.passed and closed.max_residual == 0  # exact rational arithmetic
    quad = verify_moment_conditions(H, Q, tol=1e-8, method="quadrature")
    assert quad.passed, quad.failures()


def test_moment_conditions_float_coefficients():
    Q = QPolynomial(1, 3, {(0,): 1, (1,): 0.3, (2,): -0.7})
    H = build_hermite_generator(Q)
    assert not H.is_exact
    assert verify_moment_conditions(H, Q, tol=1e-13).passed


def test_verify_detects_wrong_generator():
    Q = QPolynomial(1, 4, {(0,): 1, (2,): F(-1, 4)})
    wrong = build_hermite_generator(QPolynomial.unit(1, 4))
    rep = verify_moment_conditions(wrong, Q)
    assert not rep.passed and (2,) in rep.failures()


def test_closed_form_moment_vs_adaptive_quadrature():
    H = build_hermite_generator(QPolynomial(1, 4, {(0,): 1, (1,): F(1, 4), (3,): F(-1, 2)}))
    for k in range(6):
        val = integrate.quad(lambda x: x ** k * float(H(x)), -12, 12, epsabs=1e-13, limit=200)[0]
        assert float(H.moment((k,))) == pytest.approx(val, abs=1e-11)


def test_quadrature_moments_independent_of_node_count():
    H = build_hermite_generator(QPolynomial.unit(2, 4))
    a = quadrature_moments(H, 3)
    b = quadrature_moments(H, 3, nodes=20)
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-13)


def test_fourier_transform_closed_form_vs_quadrature(rng):
    H = build_hermite_generator(QPolynomial(1, 4, {(0,): 1, (1,): F(1, 2), (3,): F(1, 4)}))
    for lam in rng.uniform(-1.5, 1.5, 20):
        re = integrate.quad(lambda x: float(H(x)) * math.cos(2 * math.pi * x * lam), -12, 12, limit=400)[0]
        im = integrate.quad(lambda x: -float(H(x)) * math.sin(2 * math.pi * x * lam), -12, 12, limit=400)[0]
        val = complex(H.fourier(np.array([lam]))[()])
        assert abs(val - complex(re, im)) < 1e-10


def test_fourier_derivative_by_finite_difference():
    H = build_hermite_generator(QPolynomial(2, 3, {(0, 0): 1, (1, 0): F(1, 2), (1, 1): F(-1, 4)}))
    lam = np.array([0.21, -0.33])
    e = 1e-5
    fd = (H.fourier(lam + [e, 0]) - H.fourier(lam - [e, 0])) / (2 * e)
    assert abs(complex(fourier_derivative(H, (1, 0), lam)) - complex(fd)) < 1e-7


def test_fourier_at_zero_is_integral():
    H = build_hermite_generator(QPolynomial.unit(3, 4))
    assert complex(H.fourier(np.zeros(3))) == pytest.approx(1.0)
    assert H.integral() == 1


def test_general_generator_gaussian_table_matches_hermite_route():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        Q = QPolynomial.random(1 + seed % 2, 2 + seed % 4, rng)
        d = build_general_generator(Q, gaussian_inverse_fourier_table(Q.n, Q.N))
        G = d.to_hermite()
        H = build_hermite_generator(Q)
        for beta in Q.index_set:
            assert float(G.coefficient(beta)) == pytest.approx(float(H.coefficient(beta)), abs=1e-12)


def test_general_generator_unit_q_n1_N4():
    d = build_general_generator(QPolynomial.unit(1, 4), gaussian_inverse_fourier_table(1, 4))
    assert d.coeffs[(0,)] == pytest.approx(1.0)
    assert d.coeffs[(2,)] == pytest.approx(-0.25)


def test_general_generator_table_errors():
    Q = QPolynomial.unit(1, 3)
    with pytest.raises(ValueError):
        build_general_generator(Q, {(0,): 0, (1,): 0, (2,): 1})
    with pytest.raises(KeyError):
        build_general_generator(Q, {(0,): 1})


def test_generator_json_round_trip():
    H = build_hermite_generator(QPolynomial(2, 3, {(0, 0): 1, (1, 1): F(1, 4)}))
    assert GeneratingFunction.from_json(H.to_json()) == H


def test_anisotropy_factor():
    B = np.array([[2.0, 1.0], [1.0, 2.0]])
    C = anisotropy_factor(B)
    np.testing.assert_allclose(C.T @ C, np.linalg.inv(B), atol=1e-14)
    for bad in (np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones((2, 3))):
        with pytest.raises(ValueError):
            anisotropy_factor(bad)


def test_anisotropic_generator_integrates_to_one():
    B = np.array([[2.0, 1.0], [1.0, 2.0]])
    H = GeneratingFunction(2, 2, {(0, 0): 1}, B=B)
    val = integrate.dblquad(lambda y, x: float(H(np.array([x, y]))), -9, 9, -9, 9, epsabs=1e-12)[0]
    assert val == pytest.approx(1.0, abs=1e-9)


@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 10 ** 6))
def test_property_moment_conditions_exact(n, N, seed):
    Q = QPolynomial.random(n, N, np.random.default_rng(seed))
    H = build_hermite_generator(Q)
    assert verify_moment_conditions(H, Q).max_residual == 0
    assert H.integral() == 1
