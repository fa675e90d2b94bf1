"""Derivatives of quasi-interpolants and the continuous convolution used as a test oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .interpolant import HermiteData, QIConfig, evaluate_qi, truncation_radius
from .moments import GeneratingFunction, QPolynomial
from .special import MultiIndex, add, as_index, order

MAX_DERIVATIVE_ORDER = 3


class QuadratureError(RuntimeError):
    """The convolution quadrature did not converge on its window."""


@dataclass(frozen=True)
class DerivedGenerator:
    """``d^beta H`` of a Hermite-Gaussian generator, again a Hermite-Gaussian expansion."""

    base: GeneratingFunction
    beta: MultiIndex
    generator: GeneratingFunction

    @property
    def degree(self) -> int:
        return self.generator.degree

    def __call__(self, x):
        return self.generator(x)

    def integral(self):
        return self.generator.integral()


def differentiate_generator(H: GeneratingFunction, beta) -> DerivedGenerator:
    """Exact coefficient shift from ``d_j [H_k e^{-t^2}] = -H_{k+1} e^{-t^2}``."""
    beta = as_index(beta)
    if len(beta) != H.n:
        raise ValueError("derivative index has the wrong dimension")
    if H.B is not None:
        raise ValueError("only isotropic generators can be differentiated")
    if order(beta) > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivatives of order > {MAX_DERIVATIVE_ORDER} are not supported")
    sign = -1 if order(beta) % 2 else 1
    coeffs = {add(g, beta): sign * c for g, c in H.coeffs.items()}
    return DerivedGenerator(H, beta, GeneratingFunction(H.n, H.N, coeffs))


def evaluate_qi_derivative(H: GeneratingFunction, Q: QPolynomial, data: HermiteData, cfg: QIConfig, x, beta,
                           on_boundary: str = "raise", threads=None):
    """``d^beta M u(x) = (h sqrt D)^{-|beta|} M_{d^beta H} u(x)``, same data and Q."""
    G = differentiate_generator(H, beta)
    val = evaluate_qi(G.generator, Q, data, cfg, x, on_boundary=on_boundary, threads=threads)
    return val * cfg.scale ** (-order(G.beta))


@dataclass
class QuadratureSpec:
    """Composite Gauss-Legendre rule on ``[-R, R]^n`` in the kernel variable."""

    order: int = 12
    panels: int = 16
    tail_tol: float = 1e-16
    rtol: float = 1e-12
    max_refinements: int = 3


@dataclass
class ConvolutionResult:
    value: np.ndarray
    radius: float
    panels: int
    order: int
    change: float


def _rule(R: float, panels: int, k: int):
    t, w = leggauss(k)
    edges = np.linspace(-R, R, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _convolve(H, Q, derivs, delta, pts, R, panels, k):
    n = H.n
    nodes, weights = _rule(R, panels, k)
    grids = np.meshgrid(*([nodes] * n), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=-1)
    wz = np.ones(len(z))
    for wg in np.meshgrid(*([weights] * n), indexing="ij"):
        wz = wz * wg.ravel()
    kern = H(z) * wz
    out = np.empty(len(pts))
    for p, x in enumerate(pts):
        y = x[None, :] - delta * z
        qu = np.zeros(len(z))
        for gamma, a in Q.coeffs.items():
            qu += float(a) * (-delta) ** order(gamma) * np.asarray(derivs(gamma, y), dtype=float)
        terms = kern * qu
        out[p] = math.fsum(terms[np.argsort(np.abs(terms))])
    return out


def convolution_oracle(H: GeneratingFunction, Q: QPolynomial, derivs: Callable, delta: float, x,
                       quad: QuadratureSpec | None = None) -> ConvolutionResult:
    """``C_delta u(x) = int H(z) [Q(-delta d) u](x - delta z) dz``.

    ``derivs(gamma, y)`` returns ``d^gamma u`` at points ``y`` of shape
    ``(P, n)``.  The panel count is doubled until two successive rules agree
    to ``quad.rtol``; otherwise ``QuadratureError`` is raised.
    """
    quad = quad or QuadratureSpec()
    n = H.n
    pts = np.asarray(x, dtype=float).reshape(-1, n)
    R = truncation_radius(quad.tail_tol, H.degree + Q.N, n)
    panels = quad.panels
    prev = _convolve(H, Q, derivs, delta, pts, R, panels, quad.order)
    change = math.inf
    for _ in range(quad.max_refinements):
        panels *= 2
        cur = _convolve(H, Q, derivs, delta, pts, R, panels, quad.order)
        change = float(np.max(np.abs(cur - prev) / np.maximum(1.0, np.abs(cur))))
        prev = cur
        if change <= quad.rtol:
            return ConvolutionResult(cur, R, panels, quad.order, change)
    raise QuadratureError(f"convolution quadrature not converged: window radius {R:.3g}, "
                          f"{panels} panels of order {quad.order}, last relative change {change:.3g}")
