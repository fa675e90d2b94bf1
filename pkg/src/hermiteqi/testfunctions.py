"""Closed-form test functions with derivatives, operator powers and complex extensions.

Every function accepts points of shape ``(..., n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .special import MultiIndex, as_index, order, zero


def operator_power(A, s: int) -> dict[MultiIndex, float]:
    """Expand ``(sum_ik A_ik d_i d_k)^s`` into ``{gamma: coefficient of d^gamma}``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    base = {}
    for i in range(n):
        for k in range(n):
            g = [0] * n
            g[i] += 1
            g[k] += 1
            base[tuple(g)] = base.get(tuple(g), 0.0) + A[i, k]
    out = {zero(n): 1.0}
    for _ in range(s):
        nxt: dict = {}
        for g1, c1 in out.items():
            for g2, c2 in base.items():
                g = tuple(a + b for a, b in zip(g1, g2))
                nxt[g] = nxt.get(g, 0.0) + c1 * c2
        out = {g: c for g, c in nxt.items() if c != 0}
    return out


def _pts(x, n):
    x = np.asarray(x)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


@dataclass
class TestFunction:
    """Base class: subclasses implement ``deriv(gamma, x)``; the rest follows."""

    __test__ = False  # not a pytest class

    name: str = ""
    n: int = 1

    def deriv(self, gamma, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.deriv(zero(self.n), x)

    def operator(self, A, s: int, x):
        """``(sum A_ik d_i d_k)^s u`` at x."""
        x = _pts(x, self.n)
        out = np.zeros(x.shape[:-1])
        for g, c in operator_power(A, s).items():
            out = out + c * self.deriv(g, x)
        return out

    def laplacian(self, s: int, x):
        return self.operator(np.eye(self.n), s, x)

    def extension(self, z):
        raise NotImplementedError(f"{self.name} has no analytic extension")

    @property
    def has_extension(self) -> bool:
        try:
            self.extension(np.zeros((1, self.n), dtype=complex))
        except NotImplementedError:
            return False
        return True

    def deriv_sup(self, gamma, box) -> float:
        """Upper bound of |d^gamma u| over a box (default: sampled on a fine grid)."""
        axes = [np.linspace(a, b, 65) for a, b in box]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return float(np.max(np.abs(self.deriv(gamma, pts))))

    def closures(self, channels) -> dict:
        """Sampling closures keyed by channel (multi-index, ``"lap:s"``, ``"B:s"``)."""
        out = {}
        for c in channels:
            if isinstance(c, str) and ":" in c:
                kind, s = c.split(":")
                s = int(s)
                if kind == "lap":
                    out[c] = lambda x, s=s: self.laplacian(s, x)
                elif kind == "B":
                    out[c] = lambda x, s=s: self.operator(self.B, s, x)
                else:
                    raise KeyError(f"unknown channel kind {kind}")
            else:
                g = as_index(c)
                out[g] = lambda x, g=g: self.deriv(g, x)
        return out

    B: np.ndarray | None = field(default=None, repr=False)


@dataclass
class ExpFunction(TestFunction):
    """``u(x) = Re(A exp(<k, x>))`` with complex A and k; covers cos, sin and e^{x1} cos x2."""

    amplitude: complex = 1.0
    k: tuple = (1j,)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=complex)
        self.n = len(self.k)

    def deriv(self, gamma, x):
        x = _pts(x, self.n)
        gamma = as_index(gamma)
        x = np.asarray(x)
        ctype = np.clongdouble if x.dtype == np.longdouble else complex
        k = self.k.astype(ctype)
        kg = ctype(self.amplitude) * np.prod(k ** np.array(gamma))
        return (kg * np.exp(x.astype(ctype) @ k)).real

    def extension(self, z):
        z = np.asarray(z, dtype=complex)
        a = self.amplitude
        return 0.5 * (a * np.exp(z @ self.k) + np.conj(a) * np.exp(z @ np.conj(self.k)))

    @property
    def is_harmonic(self) -> bool:
        return abs(np.sum(self.k * self.k)) < 1e-14


@dataclass
class PowerFunction(TestFunction):
    """``u(x) = (b + <c, x>)^d``, a polynomial of degree d."""

    degree: int = 1
    c: tuple = (1.0,)
    b: float = 1.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.n = len(self.c)

    def deriv(self, gamma, x):
        x = _pts(x, self.n)
        gamma = as_index(gamma)
        k = order(gamma)
        if k > self.degree:
            return np.zeros(np.shape(x)[:-1])
        coef = math.perm(self.degree, k) * float(np.prod(self.c ** np.array(gamma)))
        return coef * (self.b + np.asarray(x, dtype=float) @ self.c) ** (self.degree - k)

    def extension(self, z):
        return (self.b + np.asarray(z, dtype=complex) @ self.c) ** self.degree


@dataclass
class QuadraticForm(TestFunction):
    """``u(x) = <P x, x>`` for a symmetric P (e.g. the B-harmonic ``2 x1^2 - 2 x2^2``)."""

    P: np.ndarray = field(default_factory=lambda: np.diag([2.0, -2.0]))

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.n = self.P.shape[0]

    def deriv(self, gamma, x):
        x = np.asarray(_pts(x, self.n), dtype=float)
        gamma = as_index(gamma)
        k = order(gamma)
        if k == 0:
            return np.einsum("...i,ij,...j->...", x, self.P, x)
        if k == 1:
            i = gamma.index(1)
            return 2 * x @ self.P[i]
        if k == 2:
            ij = [j for j, g in enumerate(gamma) for _ in range(g)]
            return np.full(x.shape[:-1], 2 * self.P[ij[0], ij[1]])
        return np.zeros(x.shape[:-1])

    def extension(self, z):
        z = np.asarray(z, dtype=complex)
        return np.einsum("...i,ij,...j->...", z, self.P, z)


def cosine(n: int = 1) -> ExpFunction:
    return ExpFunction(name="cos", amplitude=1.0, k=(1j,) + (0,) * (n - 1))


def sine() -> ExpFunction:
    return ExpFunction(name="sin", amplitude=-1j, k=(1j,))


def exp_cos_2d() -> ExpFunction:
    """``e^{x1} cos x2``, harmonic."""
    return ExpFunction(name="exp-cos-2d", amplitude=1.0, k=(1.0, 1j))


def transformed_exp_cos(C) -> ExpFunction:
    """``U(Cx)`` with ``U(xi) = e^{xi1} cos xi2``; B-harmonic for ``B^{-1} = C^T C``."""
    C = np.asarray(C, dtype=float)
    return ExpFunction(name="exp-cos-affine", amplitude=1.0, k=tuple(C.T @ np.array([1.0, 1j])))


def linear(n: int = 1) -> PowerFunction:
    """``u(x) = x1``."""
    return PowerFunction(name="linear", degree=1, c=(1.0,) + (0.0,) * (n - 1), b=0.0)


def polynomial(degree: int, n: int = 1) -> PowerFunction:
    return PowerFunction(name=f"poly:{degree}", degree=degree, c=tuple(1.0 / (j + 1) for j in range(n)), b=1.0)


def b_harmonic_quadratic(B) -> QuadraticForm:
    """``b22 x1^2 - b11 x2^2``: annihilated by ``sum b_ik d_i d_k``."""
    B = np.asarray(B, dtype=float)
    return QuadraticForm(name="b-quadratic", P=np.diag([B[1, 1], -B[0, 0]]))


def resolve(spec: str, n: int = 1) -> TestFunction:
    """Look up a test function by id: cos, sin, exp-cos-2d, linear, poly:<d>."""
    if spec == "cos":
        return cosine(n)
    if spec == "sin":
        if n != 1:
            raise ValueError("sin is one-dimensional")
        return sine()
    if spec == "exp-cos-2d":
        return exp_cos_2d()
    if spec == "linear":
        return linear(n)
    if spec.startswith("poly:"):
        return polynomial(int(spec.split(":", 1)[1]), n)
    raise KeyError(f"unknown test function {spec!r}")
