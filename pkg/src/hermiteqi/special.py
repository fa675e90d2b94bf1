"""Multi-index bookkeeping and the special-function kernel.

Multi-indices are plain tuples of nonnegative ints.  Everything here is pure
and works on Python scalars or numpy arrays.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

MultiIndex = tuple[int, ...]


def as_index(alpha: Sequence[int]) -> MultiIndex:
    idx = tuple(int(a) for a in alpha)
    if any(a < 0 for a in idx):
        raise ValueError(f"multi-index entries must be nonnegative: {idx}")
    return idx


def order(alpha: MultiIndex) -> int:
    """Total degree |alpha|."""
    return sum(alpha)


def leq(alpha: MultiIndex, beta: MultiIndex) -> bool:
    """Componentwise partial order alpha <= beta."""
    return all(a <= b for a, b in zip(alpha, beta))


def sub(beta: MultiIndex, alpha: MultiIndex) -> MultiIndex:
    return tuple(b - a for b, a in zip(beta, alpha))


def add(alpha: MultiIndex, beta: MultiIndex) -> MultiIndex:
    return tuple(a + b for a, b in zip(alpha, beta))


def mi_factorial(alpha: MultiIndex) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def zero(n: int) -> MultiIndex:
    return (0,) * n


def unit(n: int, j: int) -> MultiIndex:
    return tuple(1 if i == j else 0 for i in range(n))


def _compositions(n: int, d: int) -> Iterator[MultiIndex]:
    # descending lexicographic: (d,0,..) first, (..,0,d) last
    if n == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _compositions(n - 1, d - first):
            yield (first,) + rest


class IndexSet:
    """All multi-indices of dimension ``n`` with total degree ``<= max_degree``.

    Ordered by total degree, then lexicographically with the first coordinate
    most significant, so ``(1, 0)`` precedes ``(0, 1)``.
    """

    def __init__(self, n: int, max_degree: int):
        if n < 1:
            raise ValueError("dimension must be >= 1")
        if max_degree < 0:
            raise ValueError("max_degree must be >= 0")
        self.dimension = n
        self.max_degree = max_degree
        self.indices: list[MultiIndex] = [
            alpha for d in range(max_degree + 1) for alpha in _compositions(n, d)
        ]
        self._pos = {alpha: i for i, alpha in enumerate(self.indices)}

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.indices[i]

    def __contains__(self, alpha) -> bool:
        return tuple(alpha) in self._pos

    def position(self, alpha: MultiIndex) -> int:
        return self._pos[tuple(alpha)]

    def of_degree(self, d: int) -> list[MultiIndex]:
        return [a for a in self.indices if order(a) == d]

    def __repr__(self) -> str:
        return f"IndexSet(n={self.dimension}, max_degree={self.max_degree}, size={len(self)})"


def enumerate_indices(n: int, d: int) -> IndexSet:
    """Graded-lex set of every multi-index in ``n`` variables with ``|alpha| <= d``."""
    return IndexSet(n, d)


def index_set_size(n: int, d: int) -> int:
    return math.comb(d + n, n)


def hermite_1d(k: int, t):
    """Physicists' Hermite polynomial H_k(t) by the three-term recurrence.

    ``t`` may be a scalar or an array (any float dtype, including longdouble).
    """
    if k < 0:
        raise ValueError("degree must be nonnegative")
    t = np.asarray(t) if not np.isscalar(t) else t
    prev = t * 0 + 1
    if k == 0:
        return prev
    cur = 2 * t
    for j in range(1, k):
        prev, cur = cur, 2 * t * cur - 2 * j * prev
    return cur


def hermite_table(kmax: int, t) -> np.ndarray:
    """Rows H_0(t), ..., H_kmax(t); shape ``(kmax + 1,) + shape(t)``."""
    t = np.asarray(t)
    out = np.empty((kmax + 1,) + t.shape, dtype=np.result_type(t.dtype, np.float64))
    out[0] = 1
    if kmax >= 1:
        out[1] = 2 * t
    for j in range(1, kmax):
        out[j + 1] = 2 * t * out[j] - 2 * j * out[j - 1]
    return out


def hermite_eval(beta: Sequence[int], t) -> float:
    """Tensor-product Hermite polynomial H_beta(t) = prod_j H_{beta_j}(t_j)."""
    beta = as_index(beta)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape[-1] != len(beta):
        raise ValueError(f"point has dimension {t.shape[-1]}, multi-index has {len(beta)}")
    val = 1.0
    for j, k in enumerate(beta):
        val = val * hermite_1d(k, t[..., j])
    return val if np.ndim(val) else float(val)


def hermite_at_zero(beta: Sequence[int]) -> int:
    """Exact H_beta(0): zero for any odd component, else prod (-1)^g (2g)!/g!."""
    val = 1
    for k in as_index(beta):
        if k % 2:
            return 0
        g = k // 2
        val *= (-1) ** g * math.factorial(k) // math.factorial(g)
    return val


def hermite_monomial_coeffs(k: int) -> list[int]:
    """Integer coefficients of H_k in the monomial basis, lowest degree first."""
    coeffs = [0] * (k + 1)
    for j in range(k // 2 + 1):
        coeffs[k - 2 * j] = (-1) ** j * math.factorial(k) // (math.factorial(j) * math.factorial(k - 2 * j)) * 2 ** (k - 2 * j)
    return coeffs


def laguerre_eval(k: int, gamma: float, y):
    """Generalized Laguerre polynomial L_k^(gamma)(y), gamma > -1.

    (j+1) L_{j+1} = (2j + 1 + gamma - y) L_j - (j + gamma) L_{j-1}
    """
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if gamma <= -1:
        raise ValueError("Laguerre parameter must satisfy gamma > -1")
    prev = y * 0 + 1.0
    if k == 0:
        return prev
    cur = 1.0 + gamma - y
    for j in range(1, k):
        prev, cur = cur, ((2 * j + 1 + gamma - y) * cur - (j + gamma) * prev) / (j + 1)
    return cur


def gaussian_moment(alpha: Sequence[int]) -> Fraction:
    """pi^{-n/2} int x^alpha exp(-|x|^2) dx, exactly.

    Zero if some component is odd; for alpha = 2g this is
    prod (2g_j)! / (g_j! 4^{g_j}), i.e. (-1/4)^{|g|} H_alpha(0).
    """
    alpha = as_index(alpha)
    if any(a % 2 for a in alpha):
        return Fraction(0)
    g = order(alpha) // 2
    return Fraction(hermite_at_zero(alpha) * (-1) ** g, 4 ** g)
