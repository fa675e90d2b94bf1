"""Moment matrix, target moments and Hermite-Gaussian generating functions.

A derivative polynomial ``Q(t) = sum a_gamma t^gamma`` (a_0 = 1) fixes the
moments a generating function must have.  The matrix ``A[alpha, beta] =
a_{beta - alpha}`` (alpha <= beta) is unit upper triangular in graded-lex
order; the first row of its inverse gives the target moments

    int x^alpha H(x) dx = alpha! * Ainv[0, alpha].

Coefficients stay exact (``Fraction``) whenever Q has rational coefficients.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Mapping

import numpy as np

from .special import (
    IndexSet,
    MultiIndex,
    as_index,
    gaussian_moment,
    hermite_at_zero,
    hermite_table,
    laguerre_eval,
    leq,
    mi_factorial,
    order,
    sub,
    zero,
)

# coefficient pool for seeded random Q; dyadic so the moment pipeline stays exact
RANDOM_COEFFS = (
    Fraction(-1), Fraction(-1, 2), Fraction(-1, 4), Fraction(0),
    Fraction(1, 4), Fraction(1, 2), Fraction(1),
)


def _exact(x):
    if isinstance(x, (Fraction, int)) or isinstance(x, Rational):
        return Fraction(x)
    return float(x)


def _parse_key(key) -> MultiIndex:
    if isinstance(key, str):
        return as_index(int(k) for k in key.split(",") if k.strip())
    return as_index(key)


def _key_str(alpha: MultiIndex) -> str:
    return ",".join(str(a) for a in alpha)


@dataclass(frozen=True)
class QPolynomial:
    """Derivative polynomial ``Q(t) = sum_{|gamma| < N} a_gamma t^gamma``."""

    n: int
    N: int
    coeffs: Mapping[MultiIndex, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise ValueError("need n >= 1 and N >= 1")
        clean = {}
        for key, val in dict(self.coeffs).items():
            alpha = _parse_key(key)
            if len(alpha) != self.n:
                raise ValueError(f"index {alpha} does not have dimension {self.n}")
            if order(alpha) > self.N - 1:
                raise ValueError(f"|{alpha}| exceeds N - 1 = {self.N - 1}")
            val = _exact(val)
            if val != 0:
                clean[alpha] = val
        a0 = clean.get(zero(self.n), 0)
        if a0 != 1:
            raise ValueError(f"a_0 must equal 1, got {a0}")
        object.__setattr__(self, "coeffs", clean)

    def __getitem__(self, alpha) -> object:
        return self.coeffs.get(tuple(alpha), 0)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.coeffs.values())

    @property
    def is_even(self) -> bool:
        """Only even multi-indices carry coefficients (radially symmetric case)."""
        return all(all(a % 2 == 0 for a in alpha) for alpha in self.coeffs)

    @property
    def index_set(self) -> IndexSet:
        return IndexSet(self.n, self.N - 1)

    @classmethod
    def unit(cls, n: int, N: int) -> "QPolynomial":
        return cls(n, N, {zero(n): 1})

    @classmethod
    def laplacian(cls, n: int, M: int) -> "QPolynomial":
        """a_{2g} = (-1)^|g| / (g! 4^|g|) for |g| < M, zero otherwise; N = 2M.

        With the Gaussian generator this produces the Laplacian-power
        quasi-interpolant of order 2M.
        """
        coeffs = {}
        for g in IndexSet(n, M - 1):
            coeffs[tuple(2 * x for x in g)] = Fraction((-1) ** order(g), mi_factorial(g) * 4 ** order(g))
        return cls(n, 2 * M, coeffs)

    @classmethod
    def random(cls, n: int, N: int, rng: np.random.Generator, density: float = 0.6) -> "QPolynomial":
        coeffs = {zero(n): Fraction(1)}
        for alpha in IndexSet(n, N - 1):
            if order(alpha) == 0 or rng.random() > density:
                continue
            coeffs[alpha] = RANDOM_COEFFS[int(rng.integers(len(RANDOM_COEFFS)))]
        return cls(n, N, coeffs)

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "coeffs": {_key_str(a): str(v) if isinstance(v, Fraction) else v for a, v in self.coeffs.items()},
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "QPolynomial":
        coeffs = {}
        for k, v in rec.get("coeffs", {}).items():
            coeffs[_parse_key(k)] = Fraction(v) if isinstance(v, str) else v
        return cls(int(rec["n"]), int(rec["N"]), coeffs)


class MomentMatrix:
    """Unit upper triangular ``A`` over the graded-lex index set and its inverse."""

    def __init__(self, Q: QPolynomial):
        self.Q = Q
        self.index_set = Q.index_set
        idx = self.index_set.indices
        K = len(idx)
        one = Fraction(1) if Q.is_exact else 1.0
        nil = Fraction(0) if Q.is_exact else 0.0
        A = [[nil] * K for _ in range(K)]
        for i, alpha in enumerate(idx):
            for j in range(i, K):
                beta = idx[j]
                if leq(alpha, beta):
                    A[i][j] = Q[sub(beta, alpha)] if Q.is_exact else float(Q[sub(beta, alpha)])
        self.entries = A
        # back substitution, column by column; A is unit upper triangular
        inv = [[nil] * K for _ in range(K)]
        for j in range(K):
            inv[j][j] = one
            for i in range(j - 1, -1, -1):
                acc = nil
                for k in range(i + 1, j + 1):
                    if A[i][k] != 0 and inv[k][j] != 0:
                        acc += A[i][k] * inv[k][j]
                inv[i][j] = -acc
        self.inverse_entries = inv

    def __len__(self) -> int:
        return len(self.index_set)

    def entry(self, alpha, beta):
        s = self.index_set
        return self.entries[s.position(alpha)][s.position(beta)]

    def inverse(self, alpha, beta):
        s = self.index_set
        return self.inverse_entries[s.position(alpha)][s.position(beta)]

    def first_row_inverse(self) -> dict[MultiIndex, object]:
        """``alpha -> Ainv[0, alpha]``."""
        row = self.inverse_entries[0]
        return {alpha: row[i] for i, alpha in enumerate(self.index_set)}

    def as_array(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.entries])

    def inverse_array(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.inverse_entries])


def build_moment_matrix(Q: QPolynomial) -> MomentMatrix:
    return MomentMatrix(Q)


def target_moments(Q: QPolynomial) -> dict[MultiIndex, object]:
    """Moments ``int x^alpha H = alpha! Ainv[0, alpha]`` that H must reproduce."""
    row = MomentMatrix(Q).first_row_inverse()
    return {alpha: mi_factorial(alpha) * v for alpha, v in row.items()}


def hermite_gaussian_moment(alpha: MultiIndex, beta: MultiIndex) -> Fraction:
    """pi^{-n/2} int x^alpha H_beta(x) exp(-|x|^2) dx, exactly.

    Integrating by parts, ``H_beta e^{-|x|^2} = (-d)^beta e^{-|x|^2}`` moves
    the derivatives onto x^alpha.
    """
    if not leq(beta, alpha):
        return Fraction(0)
    rest = sub(alpha, beta)
    return mi_factorial(alpha) // mi_factorial(rest) * gaussian_moment(rest)


class GeneratingFunction:
    """``H(x) = pi^{-n/2} sum_beta c_beta H_beta(x) exp(-|x|^2)``.

    With an anisotropy matrix ``B`` the same expansion is read in the
    variables ``z = C x`` (``B^{-1} = C^T C``) and scaled by
    ``(det B)^{-1/2}``.
    """

    def __init__(self, n: int, N: int, coeffs: Mapping, B=None):
        self.n = int(n)
        self.N = int(N)
        clean = {}
        for key, val in dict(coeffs).items():
            beta = _parse_key(key)
            if len(beta) != self.n:
                raise ValueError(f"index {beta} does not have dimension {self.n}")
            val = _exact(val)
            if val != 0:
                clean[beta] = val
        self.coeffs: dict[MultiIndex, object] = clean
        self.B = None
        self.C = None
        if B is not None:
            B = np.array(B, dtype=float)
            self.B, self.C = B, anisotropy_factor(B)

    # --- structure -----------------------------------------------------
    @property
    def indices(self) -> list[MultiIndex]:
        ordered = IndexSet(self.n, self.degree).indices
        return [b for b in ordered if b in self.coeffs]

    @property
    def degree(self) -> int:
        return max((order(b) for b in self.coeffs), default=0)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.coeffs.values())

    def coefficient(self, beta) -> object:
        return self.coeffs.get(tuple(beta), 0)

    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """Multi-indices ``(K, n)`` and float coefficients ``(K,)`` for the kernels."""
        idx = self.indices
        if not idx:
            return np.zeros((0, self.n), dtype=np.int64), np.zeros(0)
        return (np.array(idx, dtype=np.int64).reshape(len(idx), self.n),
                np.array([float(self.coeffs[b]) for b in idx]))

    # --- evaluation ----------------------------------------------------
    def polynomial(self, z) -> np.ndarray:
        """``sum_beta c_beta H_beta(z)`` at points ``z`` of shape ``(..., n)``."""
        z = np.asarray(z)
        if z.shape[-1] != self.n:
            raise ValueError(f"points must have trailing dimension {self.n}")
        idx, coefs = self.table()
        kmax = int(idx.max()) if idx.size else 0
        tabs = [hermite_table(kmax, z[..., j]) for j in range(self.n)]
        out = np.zeros(z.shape[:-1], dtype=np.result_type(z.dtype, np.float64))
        for beta, c in zip(idx, coefs):
            term = np.full(z.shape[:-1], c, dtype=out.dtype)
            for j in range(self.n):
                term = term * tabs[j][beta[j]]
            out += term
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if self.C is not None:
            z = x @ self.C.T
            pref = abs(np.linalg.det(self.C)) * math.pi ** (-self.n / 2)
        else:
            z = x
            pref = math.pi ** (-self.n / 2)
        return pref * self.polynomial(z) * np.exp(-np.sum(z * z, axis=-1))

    # --- moments and Fourier transform ---------------------------------
    def moment(self, alpha) -> object:
        """Closed-form ``int x^alpha H(x) dx`` (isotropic expansion only)."""
        alpha = as_index(alpha)
        total = Fraction(0) if self.is_exact else 0.0
        for beta, c in self.coeffs.items():
            m = hermite_gaussian_moment(alpha, beta)
            if m:
                total += c * m if self.is_exact else float(c) * float(m)
        return total

    def integral(self) -> object:
        return self.moment(zero(self.n))

    def fourier(self, lam) -> np.ndarray:
        """``FH(lam) = sum_beta c_beta (-2 pi i lam)^beta exp(-pi^2 |lam|^2)``."""
        return fourier_derivative(self, zero(self.n), lam)

    # --- serialization -------------------------------------------------
    def to_record(self) -> dict:
        rec = {
            "n": self.n,
            "N": self.N,
            "coeffs": [
                [list(b), str(self.coeffs[b]) if isinstance(self.coeffs[b], Fraction) else self.coeffs[b]]
                for b in self.indices
            ],
        }
        if self.B is not None:
            rec["B"] = self.B.tolist()
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "GeneratingFunction":
        coeffs = {}
        for beta, v in rec["coeffs"]:
            coeffs[as_index(beta)] = Fraction(v) if isinstance(v, str) else v
        return cls(rec["n"], rec["N"], coeffs, rec.get("B"))

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GeneratingFunction":
        return cls.from_record(json.loads(text))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneratingFunction):
            return NotImplemented
        same_B = (self.B is None and other.B is None) or (
            self.B is not None and other.B is not None and np.array_equal(self.B, other.B))
        return self.n == other.n and self.N == other.N and self.coeffs == other.coeffs and same_B

    def __repr__(self) -> str:
        return f"GeneratingFunction(n={self.n}, N={self.N}, terms={len(self.coeffs)}{', anisotropic' if self.B is not None else ''})"


def anisotropy_factor(B) -> np.ndarray:
    """Upper-triangular ``C`` with ``C^T C = B^{-1}``; rejects non-SPD input."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("B must be a square matrix")
    if not np.allclose(B, B.T, rtol=0, atol=1e-14 * max(1.0, np.abs(B).max())):
        raise ValueError("B must be symmetric")
    try:
        np.linalg.cholesky(B)
        L = np.linalg.cholesky(np.linalg.inv(B))
    except np.linalg.LinAlgError as exc:
        raise ValueError("B must be positive definite") from exc
    return L.T


def _poly_gauss_derivative(k: int, p: int, lam) -> np.ndarray:
    """p-th derivative of ``(-2 pi i lam)^k exp(-pi^2 lam^2)`` at ``lam``."""
    # represent as P(lam) * exp(-pi^2 lam^2); P' -> P' - 2 pi^2 lam P
    P = np.polynomial.Polynomial([0] * k + [(-2j * math.pi) ** k])
    x = np.polynomial.Polynomial([0, 1])
    for _ in range(p):
        P = P.deriv() - 2 * math.pi ** 2 * x * P
    lam = np.asarray(lam, dtype=float)
    return P(lam) * np.exp(-math.pi ** 2 * lam * lam)


def fourier_derivative(H: GeneratingFunction, alpha, lam) -> np.ndarray:
    """``d^alpha FH`` at ``lam`` (shape ``(..., n)``), complex, closed form."""
    alpha = as_index(alpha)
    lam = np.asarray(lam, dtype=float)
    if H.n == 1 and (lam.ndim == 0 or lam.shape[-1] != 1):
        lam = lam[..., None]
    out = np.zeros(lam.shape[:-1], dtype=complex)
    for beta, c in H.coeffs.items():
        term = np.full(lam.shape[:-1], float(c), dtype=complex)
        for j in range(H.n):
            term = term * _poly_gauss_derivative(beta[j], alpha[j], lam[..., j])
        out += term
    return out


def build_hermite_generator(Q: QPolynomial) -> GeneratingFunction:
    """Gaussian-based generator meeting the moment conditions of ``Q``.

    ``c_beta = sum_{2g <= beta} (-1)^|g| / (g! 4^|g|) * Ainv[0, beta - 2g]``
    """
    row = MomentMatrix(Q).first_row_inverse()
    coeffs = {}
    for beta in Q.index_set:
        acc = Fraction(0) if Q.is_exact else 0.0
        for g in IndexSet(Q.n, order(beta) // 2):
            two_g = tuple(2 * x for x in g)
            if not leq(two_g, beta):
                continue
            w = Fraction((-1) ** order(g), mi_factorial(g) * 4 ** order(g))
            r = row[sub(beta, two_g)]
            acc += w * r if Q.is_exact else float(w) * r
        coeffs[beta] = acc
    return GeneratingFunction(Q.n, Q.N, coeffs)


def laguerre_generator_value(n: int, M: int, x) -> np.ndarray:
    """``pi^{-n/2} L_{M-1}^{(n/2)}(|x|^2) exp(-|x|^2)``; order-2M classical generator."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    return math.pi ** (-n / 2) * laguerre_eval(M - 1, n / 2, r2) * np.exp(-r2)


@dataclass(frozen=True)
class DerivativeExpansion:
    """``H = sum_beta d_beta d^beta eta`` for a user-supplied base function eta."""

    n: int
    N: int
    coeffs: Mapping[MultiIndex, float]

    def to_hermite(self) -> GeneratingFunction:
        """Re-express for the Gaussian eta: ``d^beta eta = (-1)^|beta| pi^{-n/2} H_beta e^{-|x|^2}``."""
        return GeneratingFunction(self.n, self.N, {b: (-1) ** order(b) * d for b, d in self.coeffs.items()})


def gaussian_inverse_fourier_table(n: int, N: int) -> dict[MultiIndex, complex]:
    """``d^delta (1/F eta)(0) = (-pi i)^|delta| H_delta(0)`` for the Gaussian eta."""
    return {d: (-1j * math.pi) ** order(d) * hermite_at_zero(d) for d in IndexSet(n, N - 1)}


def build_general_generator(Q: QPolynomial, inverse_fourier_derivs: Mapping) -> DerivativeExpansion:
    """Coefficients of ``d^beta eta`` for a generic base function eta.

    ``inverse_fourier_derivs[delta]`` must hold ``d^delta (1/F eta)(0)`` for
    every ``|delta| < N``; entries may be complex but the result is real for
    real-valued eta.
    """
    table = {_parse_key(k): complex(v) for k, v in dict(inverse_fourier_derivs).items()}
    z = zero(Q.n)
    if table.get(z, 0) == 0:
        raise ValueError("F eta(0) must be nonzero: table entry at delta = 0 is zero or missing")
    row = MomentMatrix(Q).first_row_inverse()
    coeffs = {}
    for beta in Q.index_set:
        acc = 0j
        for alpha in Q.index_set:
            if order(alpha) > order(beta) or not leq(alpha, beta):
                continue
            delta = sub(beta, alpha)
            if delta not in table:
                raise KeyError(f"missing inverse Fourier derivative for delta={delta}")
            acc += (float(row[alpha]) * (-1) ** order(alpha) * table[delta]
                    / (mi_factorial(delta) * (2j * math.pi) ** order(delta)))
        if abs(acc.imag) > 1e-12 * max(1.0, abs(acc.real)):
            raise ValueError(f"coefficient for {beta} is not real ({acc}); check the table")
        if acc.real != 0:
            coeffs[beta] = acc.real
    return DerivativeExpansion(Q.n, Q.N, coeffs)


@dataclass
class MomentReport:
    residuals: dict[MultiIndex, float]
    tol: float
    method: str = "closed-form"

    @property
    def max_residual(self) -> float:
        return max((abs(float(r)) for r in self.residuals.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def failures(self) -> dict[MultiIndex, float]:
        return {b: float(r) for b, r in self.residuals.items() if abs(float(r)) > self.tol}


def quadrature_moments(H: GeneratingFunction, max_degree: int, nodes: int | None = None) -> dict[MultiIndex, float]:
    """Moments by tensor Gauss-Hermite quadrature of pointwise values of H.

    Independent of the coefficient algebra: H is sampled through ``H(x)`` and
    the rule is applied to ``H(x) e^{|x|^2}``.  Exact up to rounding once
    ``nodes > (max_degree + deg H) / 2``.
    """
    if nodes is None:
        nodes = (max_degree + H.degree) // 2 + 4
    t, w = np.polynomial.hermite.hermgauss(nodes)
    grids = np.meshgrid(*([t] * H.n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.meshgrid(*([w] * H.n), indexing="ij"), axis=0).ravel()
    vals = H(pts) * np.exp(np.sum(pts * pts, axis=-1)) * wts
    out = {}
    for alpha in IndexSet(H.n, max_degree):
        mono = np.prod(pts ** np.array(alpha), axis=-1)
        out[alpha] = math.fsum(vals * mono)
    return out


def verify_moment_conditions(H: GeneratingFunction, Q: QPolynomial, tol: float = 1e-10,
                             method: str = "closed-form") -> MomentReport:
    """Residuals ``r_beta = sum_{alpha <= beta} a_{beta-alpha}/alpha! m_alpha - delta_{|beta|0}``."""
    if H.n != Q.n:
        raise ValueError("dimension mismatch between generator and Q")
    if method == "closed-form":
        moments = {a: H.moment(a) for a in Q.index_set}
    elif method == "quadrature":
        moments = quadrature_moments(H, Q.N - 1)
    else:
        raise ValueError(f"unknown method {method!r}")
    exact = H.is_exact and Q.is_exact and method == "closed-form"
    residuals = {}
    for beta in Q.index_set:
        acc = Fraction(0) if exact else 0.0
        for alpha in Q.index_set:
            if order(alpha) > order(beta) or not leq(alpha, beta):
                continue
            a = Q[sub(beta, alpha)]
            if a == 0:
                continue
            if exact:
                acc += a / mi_factorial(alpha) * moments[alpha]
            else:
                acc += float(a) / mi_factorial(alpha) * float(moments[alpha])
        residuals[beta] = acc - (1 if order(beta) == 0 else 0)
    return MomentReport(residuals, tol, method)
