"""Fourier-side analysis of the saturation error.

Convention: ``F f(lam) = int f(x) exp(-2 pi i <x, lam>) dx``, so the
normalized Gaussian ``pi^{-n/2} exp(-|x|^2)`` has transform
``exp(-pi^2 |lam|^2)``.  Every series here runs over the dual lattice and
decays like ``exp(-pi^2 D |nu|^2)``.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import kernels
from .interpolant import truncation_radius
from .moments import GeneratingFunction, QPolynomial, anisotropy_factor, fourier_derivative
from .special import IndexSet, MultiIndex, as_index, hermite_table, leq, mi_factorial, order, sub


def frequency_cutoff(D: float, degree: int = 0, tail_tol: float = 1e-16, min_eig: float = 1.0) -> int:
    """Smallest shell ``nu_max >= 1`` whose first omitted shell is negligible.

    Requires ``exp(-pi^2 D c (k^2 - 1)) k^degree < 1e-2 * tail_tol`` for
    ``k = nu_max + 1``, i.e. relative to the leading ``|nu| = 1`` term, with
    ``c`` the smallest eigenvalue of the dual-lattice quadratic form.
    """
    k = 2
    while math.exp(-math.pi ** 2 * D * min_eig * (k * k - 1)) * (k * (1 + 2 * math.pi * math.sqrt(D))) ** degree \
            >= 1e-2 * tail_tol:
        k += 1
    return k - 1


def _dual_lattice(n: int, nu_max: int, include_zero: bool = False) -> np.ndarray:
    rng = range(-nu_max, nu_max + 1)
    nus = np.array(list(itertools.product(rng, repeat=n)), dtype=float)
    if not include_zero:
        nus = nus[np.any(nus != 0, axis=1)]
    return nus


def _points(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1:
        if x.ndim == 0:
            return x.reshape(1, 1), None
        shape = x.shape[:-1] if (x.ndim >= 2 and x.shape[-1] == 1) else x.shape
        return x.reshape(-1, 1), shape
    if x.ndim == 1:
        return x.reshape(1, n), None
    return x.reshape(-1, n), x.shape[:-1]


def _shape_back(vals, shape):
    if shape is None:
        return vals[0].item()
    return vals.reshape(shape)


@dataclass
class FourierSeriesSum:
    """A truncated dual-lattice series evaluated at a batch of points."""

    beta: MultiIndex
    D: float
    cutoff: int
    value: np.ndarray
    imag_residual: np.ndarray

    @property
    def n(self) -> int:
        return len(self.beta)


def sigma_series(beta, x, D: float, cutoff: int | None = None, tail_tol: float = 1e-16) -> FourierSeriesSum:
    """``sigma_beta(x, D) = (-2 pi i)^|beta| D^{|beta|/2} sum_{m != 0} m^beta e^{-pi^2 D |m|^2} e^{2 pi i <m, x>}``.

    For beta = 0 this is the relative lattice-sum defect
    ``(pi D)^{-n/2} sum_m exp(-|x - m|^2 / D) - 1``.
    """
    beta = as_index(beta)
    n = len(beta)
    if D <= 0:
        raise ValueError("D must be positive")
    pts, shape = _points(x, n)
    k = order(beta)
    if cutoff is None:
        cutoff = frequency_cutoff(D, k, tail_tol)
    nus = _dual_lattice(n, cutoff)
    amp = np.prod(nus ** np.array(beta, dtype=float), axis=1) * np.exp(-math.pi ** 2 * D * np.sum(nus * nus, axis=1))
    # sort by magnitude, smallest first, for a stable sum
    order_ = np.argsort(np.abs(amp), kind="stable")
    nus, amp = nus[order_], amp[order_]
    phase = np.exp(2j * math.pi * (pts @ nus.T))
    total = (phase * amp).sum(axis=1) * ((-2j * math.pi) ** k * D ** (k / 2))
    return FourierSeriesSum(beta, D, cutoff, _shape_back(total.real, shape), _shape_back(total.imag, shape))


def sigma_beta(beta, x, D: float, cutoff: int | None = None):
    """Real value of the periodic function sigma_beta(x, D); see ``sigma_series``."""
    return sigma_series(beta, x, D, cutoff).value


def sigma_direct(beta, x, D: float, tail_tol: float = 1e-16, threads=None):
    """Lattice-side sum ``(pi D)^{-n/2} sum_m H_beta((x-m)/sqrt D) e^{-|x-m|^2/D} - delta_{beta,0}``.

    Independent of the Fourier series; the two agree by Poisson summation.
    """
    beta = as_index(beta)
    n = len(beta)
    pts, shape = _points(x, n)
    R = truncation_radius(tail_tol, order(beta), n)
    scale = math.sqrt(D)
    w = np.full(n, scale * R)
    sums, _ = kernels.lattice_sum(pts, 1.0, scale, np.eye(n), R * R, w, np.array([beta], dtype=np.int64),
                                  np.array([1.0]), mode=kernels.UNIT, threads=threads)
    vals = sums * (math.pi * D) ** (-n / 2) - (1.0 if order(beta) == 0 else 0.0)
    return _shape_back(vals, shape)


def _fourier_gauss_derivative(delta: MultiIndex, lam: np.ndarray) -> np.ndarray:
    """``d^delta exp(-pi^2 |lam|^2) = (-pi)^|delta| H_delta(pi lam) exp(-pi^2 |lam|^2)``."""
    kmax = max(delta) if delta else 0
    val = np.full(lam.shape[:-1], (-math.pi) ** order(delta))
    for j, d in enumerate(delta):
        val = val * hermite_table(kmax, math.pi * lam[..., j])[d]
    return val * np.exp(-math.pi ** 2 * np.sum(lam * lam, axis=-1))


def sigma_affine(alpha, xi, D: float, C, cutoff: int | None = None, tail_tol: float = 1e-16):
    """``Sigma_alpha(xi, D) = det C (pi D)^{-n/2} sum_m ((xi - Cm)/sqrt D)^alpha e^{-|(xi - Cm)/sqrt D|^2}``

    evaluated through its dual-lattice series with frequencies ``C^{-T} nu``
    (the ``nu = 0`` term included).
    """
    alpha = as_index(alpha)
    n = len(alpha)
    C = np.asarray(C, dtype=float).reshape(n, n)
    det = np.linalg.det(C)
    if abs(det) < 1e-300 or np.linalg.cond(C) > 1e14:
        raise ValueError("lattice transform C is singular")
    CinvT = np.linalg.inv(C).T
    B = np.linalg.inv(C.T @ C)  # |C^{-T} nu|^2 = nu^T B nu
    min_eig = float(np.linalg.eigvalsh(B).min())
    pts, shape = _points(xi, n)
    if cutoff is None:
        cutoff = frequency_cutoff(D, order(alpha), tail_tol, min_eig)
    nus = _dual_lattice(n, cutoff, include_zero=True)
    freqs = nus @ CinvT.T
    amp = _fourier_gauss_derivative(alpha, math.sqrt(D) * freqs)
    order_ = np.argsort(np.abs(amp), kind="stable")
    freqs, amp = freqs[order_], amp[order_]
    phase = np.exp(2j * math.pi * (pts @ freqs.T))
    total = (phase * amp).sum(axis=1) * (1j / (2 * math.pi)) ** order(alpha)
    return _shape_back(total.real, shape)


def sigma_affine_constant(alpha) -> float:
    """The ``nu = 0`` term: ``alpha! / (2^|alpha| g!)`` for alpha = 2g, else 0."""
    alpha = as_index(alpha)
    if any(a % 2 for a in alpha):
        return 0.0
    g = tuple(a // 2 for a in alpha)
    return mi_factorial(alpha) / (2 ** order(alpha) * mi_factorial(g))


@dataclass
class SaturationBound:
    """Bounds on the D-dependent saturation terms of a generator/Q pair.

    ``per_alpha[alpha]`` bounds ``|sigma_alpha - int x^alpha H|``;
    ``per_beta[beta]`` bounds ``|sum_{alpha <= beta} a_{beta-alpha}/alpha! E_alpha|``
    and ``epsilon`` is their maximum.
    """

    D: float
    per_alpha: dict[MultiIndex, float]
    per_beta: dict[MultiIndex, float]
    cutoff: int
    amplitudes: dict[MultiIndex, float] = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return max(self.per_beta.values())

    def floor(self, scale: float, deriv_bounds: Mapping[MultiIndex, float] | Callable) -> float:
        """``sum_beta scale^|beta| |d^beta u| per_beta[beta]``, the saturation floor for u."""
        get = deriv_bounds if callable(deriv_bounds) else (lambda b: deriv_bounds.get(b, 0.0))
        return sum(scale ** order(b) * abs(get(b)) * e for b, e in self.per_beta.items())

    def to_csv(self, path, config: Mapping | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if config is not None:
                fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["D", "beta", "bound", "sup_amplitude", "cutoff"])
            for b in sorted(self.per_beta, key=lambda t: (order(t), [-v for v in t])):
                wr.writerow([repr(self.D), ",".join(map(str, b)), repr(self.per_beta[b]),
                             repr(self.amplitudes.get(b, float("nan"))), self.cutoff])


def epsilon_bound(H: GeneratingFunction, Q: QPolynomial, D: float, tail_tol: float = 1e-16,
                  amplitude_grid: int = 0) -> SaturationBound:
    """Per-alpha bounds ``(2 pi)^{-|alpha|} sum_{nu != 0} |d^alpha FH(sqrt(D) nu)|`` and their Q-combinations.

    With ``amplitude_grid > 0`` the actual sup over one period of
    ``E_alpha`` is also sampled on a uniform grid with that many points per
    axis.
    """
    n = H.n
    cutoff = frequency_cutoff(D, H.degree + Q.N, tail_tol)
    nus = _dual_lattice(n, cutoff)
    lam = math.sqrt(D) * nus
    per_alpha, series = {}, {}
    for alpha in Q.index_set:
        vals = fourier_derivative(H, alpha, lam)
        series[alpha] = vals
        terms = np.sort(np.abs(vals))
        per_alpha[alpha] = (2 * math.pi) ** (-order(alpha)) * math.fsum(terms)
    per_beta = {}
    for beta in Q.index_set:
        acc = 0.0
        for alpha in Q.index_set:
            if order(alpha) <= order(beta) and leq(alpha, beta):
                a = Q[sub(beta, alpha)]
                if a:
                    acc += abs(float(a)) / mi_factorial(alpha) * per_alpha[alpha]
        per_beta[beta] = acc
    amps = {}
    if amplitude_grid:
        g = np.arange(amplitude_grid) / amplitude_grid
        xi = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
        phase = np.exp(2j * math.pi * (xi @ nus.T))
        E = {a: (1j / (2 * math.pi)) ** order(a) * (phase @ series[a]) for a in Q.index_set}
        for beta in Q.index_set:
            comb = np.zeros(len(xi), dtype=complex)
            for alpha in Q.index_set:
                if order(alpha) <= order(beta) and leq(alpha, beta):
                    a = Q[sub(beta, alpha)]
                    if a:
                        comb += float(a) / mi_factorial(alpha) * E[alpha]
            amps[beta] = float(np.abs(comb.real).max())
    return SaturationBound(D, per_alpha, per_beta, cutoff, amps)


def saturation_profile(H: GeneratingFunction, Q: QPolynomial, D: float, xi, tail_tol: float = 1e-16):
    """``E_alpha(xi) = sigma_alpha(xi, D, H) - int x^alpha H`` for every |alpha| < N, via the dual series.

    ``sigma_alpha(xi) - m_alpha = (i/2pi)^|alpha| sum_{nu != 0} d^alpha FH(sqrt D nu) e^{2 pi i <nu, xi>}``.
    """
    n = H.n
    pts, shape = _points(xi, n)
    cutoff = frequency_cutoff(D, H.degree + Q.N, tail_tol)
    nus = _dual_lattice(n, cutoff)
    phase = np.exp(2j * math.pi * (pts @ nus.T))
    out = {}
    for alpha in Q.index_set:
        vals = fourier_derivative(H, alpha, math.sqrt(D) * nus)
        out[alpha] = _shape_back(((1j / (2 * math.pi)) ** order(alpha) * (phase @ vals)).real, shape)
    return out


def anisotropic_epsilon(B, D: float, M: int, tail_tol: float = 1e-16) -> dict[MultiIndex, float]:
    """Bounds on ``|E_beta - delta_{beta,0}|`` for the anisotropic order-2M formula, |beta| < 2M.

    ``sum_{2g <= beta} pi^{|beta - 2g|} / (g! (beta - 2g)! 2^|beta|) sum_{nu != 0} |d^{beta-2g} F eta(sqrt D C^{-T} nu)|``
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    C = anisotropy_factor(B)
    CinvT = np.linalg.inv(C).T
    min_eig = float(np.linalg.eigvalsh(B).min())
    cutoff = frequency_cutoff(D, 2 * M, tail_tol, min_eig)
    lam = math.sqrt(D) * (_dual_lattice(n, cutoff) @ CinvT.T)
    sums = {}
    for delta in IndexSet(n, 2 * M - 1):
        sums[delta] = math.fsum(np.sort(np.abs(_fourier_gauss_derivative(delta, lam))))
    out = {}
    for beta in IndexSet(n, 2 * M - 1):
        acc = 0.0
        for g in IndexSet(n, order(beta) // 2):
            two_g = tuple(2 * v for v in g)
            if leq(two_g, beta):
                rest = sub(beta, two_g)
                acc += math.pi ** order(rest) / (mi_factorial(g) * mi_factorial(rest) * 2 ** order(beta)) * sums[rest]
        out[beta] = acc
    return out


def predict_harmonic_saturation(u_ext: Callable, x, h: float, D: float, cutoff: int | None = None,
                                tail_tol: float = 1e-16, return_residual: bool = False):
    """Exact saturation error of the Gaussian quasi-interpolant for harmonic u:

        sum_{m != 0} u~(x + i pi h D m) exp(-pi^2 D |m|^2) exp(2 pi i <m, x> / h)

    ``u_ext`` evaluates the analytic extension at complex points ``(..., n)``.
    The real part is returned; with ``return_residual`` the imaginary part too.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] if x.ndim >= 1 and (x.ndim > 1 or x.size > 1) else 1
    pts, shape = _points(x, n)
    if cutoff is None:
        cutoff = frequency_cutoff(D, 0, tail_tol * 1e-2)
    nus = _dual_lattice(n, cutoff)
    env = np.exp(-math.pi ** 2 * D * np.sum(nus * nus, axis=1))
    total = np.zeros(len(pts), dtype=complex)
    for m, e in sorted(zip(nus.tolist(), env), key=lambda t: t[1]):
        m = np.array(m)
        z = pts + 1j * math.pi * h * D * m
        total += np.asarray(u_ext(z), dtype=complex) * e * np.exp(2j * math.pi * (pts @ m) / h)
    real = _shape_back(total.real, shape)
    if return_residual:
        return real, _shape_back(total.imag, shape)
    return real


def taylor_extension(derivs: Callable, x0, order_: int) -> Callable:
    """Taylor polynomial ``u~_N(z) = sum_{|beta| < N} d^beta u(x0) / beta! (z - x0)^beta``."""
    x0 = np.asarray(x0, dtype=float).ravel()
    n = len(x0)
    terms = [(beta, derivs(beta, x0) / mi_factorial(beta)) for beta in IndexSet(n, order_ - 1)]

    def ext(z):
        z = np.asarray(z, dtype=complex)
        dz = z - x0
        out = np.zeros(z.shape[:-1], dtype=complex)
        for beta, c in terms:
            out = out + c * np.prod(dz ** np.array(beta), axis=-1)
        return out

    return ext


def predict_truncated_saturation(derivs: Callable, x, h: float, D: float, order_: int, **kw):
    """Same series with u~ replaced by its Taylor polynomial of order ``order_`` = 2M at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return predict_harmonic_saturation(taylor_extension(derivs, x, order_), x, h, D, **kw)


def saturation_via_sigma(derivs: Callable, x, h: float, D: float, order_: int) -> float:
    """``sum_{|beta| < 2M} d^beta u(x) / beta! (-h sqrt(D) / 2)^|beta| sigma_beta(x / h, D)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(x)
    s = -h * math.sqrt(D) / 2
    total = 0.0
    for beta in IndexSet(n, order_ - 1):
        total += derivs(beta, x) / mi_factorial(beta) * s ** order(beta) * sigma_beta(beta, x / h, D)
    return total
