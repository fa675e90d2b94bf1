"""Quasi-interpolants on the uniform grid h Z^n.

All evaluators share one lattice-sum kernel: a node value ``v_m`` built from
the sampled channels, times a Hermite-Gaussian weight in the scaled
variable ``z = T (x - h m) / (h sqrt(D))``.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .moments import GeneratingFunction, QPolynomial, anisotropy_factor
from .special import as_index, order, zero


class MissingChannelError(KeyError):
    pass


class WindowError(ValueError):
    """The sampled window does not cover the truncation box of a point."""


def truncation_radius(tail_tol: float, degree: int = 0, n: int = 1) -> float:
    """Radius R in the scaled variable beyond which the weights are dropped.

    Solves ``R^2 = ln(1/tail_tol) + (degree + n) ln(1 + R)`` so that the
    polynomial factor of the weight and the growth of lattice shells are
    covered, not only the bare Gaussian.
    """
    if not 0 < tail_tol < 1:
        raise ValueError("tail_tol must lie in (0, 1)")
    L = -math.log(tail_tol)
    R = math.sqrt(L)
    for _ in range(50):
        R_new = math.sqrt(L + (degree + n) * math.log1p(R))
        if abs(R_new - R) < 1e-12:
            break
        R = R_new
    return R


@dataclass(frozen=True)
class QIConfig:
    h: float
    D: float
    N: int = 2
    tail_tol: float = 1e-16

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.D > 0:
            raise ValueError("D must be positive")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0 < self.tail_tol < 1:
            raise ValueError("tail_tol must lie in (0, 1)")

    @property
    def scale(self) -> float:
        """h sqrt(D), the width of one generating function."""
        return self.h * math.sqrt(self.D)

    @property
    def coarse(self) -> bool:
        """h sqrt(D) >= 1; outside the harmonic-limit regime."""
        return self.scale >= 1

    def radius(self, degree: int = 0, n: int = 1) -> float:
        return truncation_radius(self.tail_tol, degree, n)


def _channel_key(key):
    if isinstance(key, str):
        if ":" in key:
            kind, s = key.split(":")
            return f"{kind}:{int(s)}"
        return as_index(int(k) for k in key.split(","))
    return as_index(key)


def _channel_str(key) -> str:
    return key if isinstance(key, str) else ",".join(str(k) for k in key)


@dataclass
class HermiteData:
    """Samples of u and derivative channels on a box of lattice indices.

    Channels are keyed by a multi-index (``d^gamma u``) or by ``"lap:s"`` /
    ``"B:s"`` for powers of the Laplacian or of the operator
    ``sum b_ik d_i d_k``.  With a ``mask`` the data is read as extended by
    zero outside the domain and evaluation near its boundary is allowed.
    """

    h: float
    lo: tuple[int, ...]
    shape: tuple[int, ...]
    channels: dict = field(default_factory=dict)
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.lo = tuple(int(v) for v in self.lo)
        self.shape = tuple(int(v) for v in self.shape)
        self.channels = {_channel_key(k): np.asarray(v).reshape(self.shape) for k, v in self.channels.items()}

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def dtype(self):
        return next(iter(self.channels.values())).dtype if self.channels else np.dtype(float)

    def axes(self, dtype=float) -> list[np.ndarray]:
        h = np.asarray(self.h, dtype=dtype)
        return [h * np.arange(l, l + s, dtype=dtype) for l, s in zip(self.lo, self.shape)]

    def points(self, dtype=float) -> np.ndarray:
        grids = np.meshgrid(*self.axes(dtype), indexing="ij")
        return np.stack(grids, axis=-1)

    def channel(self, key) -> np.ndarray:
        key = _channel_key(key)
        if key not in self.channels:
            raise MissingChannelError(f"channel {_channel_str(key)} was not sampled")
        return self.channels[key]

    def extent(self) -> list[tuple[float, float]]:
        return [(self.h * l, self.h * (l + s - 1)) for l, s in zip(self.lo, self.shape)]

    # --- text record ---------------------------------------------------
    def to_record(self) -> dict:
        rec = {
            "h": self.h,
            "lo": list(self.lo),
            "shape": list(self.shape),
            "channels": {_channel_str(k): np.asarray(v, dtype=float).ravel().tolist() for k, v in self.channels.items()},
        }
        if self.mask is not None:
            rec["mask"] = np.asarray(self.mask, dtype=int).ravel().tolist()
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "HermiteData":
        mask = rec.get("mask")
        shape = tuple(rec["shape"])
        return cls(
            float(rec["h"]), tuple(rec["lo"]), shape,
            {k: np.array(v, dtype=float) for k, v in rec["channels"].items()},
            None if mask is None else np.array(mask, dtype=bool).reshape(shape),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text: str) -> "HermiteData":
        return cls.from_record(json.loads(text))


def sample_on_window(closures: Mapping[object, Callable], h: float, box: Sequence[tuple[float, float]] | None = None,
                     domain: Callable | None = None, channels: Sequence | None = None,
                     dtype=float) -> HermiteData:
    """Sample every required channel at the lattice points of ``box``.

    ``closures`` maps a channel key to a function of points ``(..., n)``.
    With ``domain`` (a predicate on points) only lattice points inside it are
    kept; the rest are stored as zero and masked out.
    """
    if box is None:
        raise ValueError("a bounding box is required")
    closures = {_channel_key(k): f for k, f in closures.items()}
    wanted = list(closures) if channels is None else [_channel_key(c) for c in channels]
    missing = [c for c in wanted if c not in closures]
    if missing:
        raise MissingChannelError(f"no closure for channels {[_channel_str(c) for c in missing]}")
    lo, shape = [], []
    for a, b in box:
        i0 = math.ceil(a / h - 1e-9)
        i1 = math.floor(b / h + 1e-9)
        if i1 < i0:
            raise ValueError(f"box [{a}, {b}] contains no lattice point for h={h}")
        lo.append(i0)
        shape.append(i1 - i0 + 1)
    data = HermiteData(h, tuple(lo), tuple(shape))
    pts = data.points(dtype)
    mask = None
    if domain is not None:
        mask = np.asarray(domain(pts), dtype=bool)
    for c in wanted:
        vals = np.asarray(closures[c](pts), dtype=dtype)
        if vals.shape == pts.shape and data.n == 1:
            vals = vals[..., 0]  # elementwise closure such as np.cos
        vals = np.broadcast_to(vals, data.shape).copy()
        if mask is not None:
            vals[~mask] = 0
        data.channels[c] = vals
    data.mask = mask
    return data


def _as_points(x, n: int, dtype=float):
    """Points as ``(P, n)`` plus the output shape (``None`` for a single point)."""
    x = np.asarray(x, dtype=dtype)
    if n == 1:
        if x.ndim == 0:
            return x.reshape(1, 1), None
        out_shape = x.shape[:-1] if (x.ndim >= 2 and x.shape[-1] == 1) else x.shape
        return x.reshape(-1, 1), out_shape
    if x.shape[-1] != n:
        raise ValueError(f"points must have trailing dimension {n}")
    if x.ndim == 1:
        return x.reshape(1, n), None
    return x.reshape(-1, n), x.shape[:-1]


def _finish(vals, out_shape):
    if out_shape is None:
        return float(vals[0]) if vals.dtype == np.float64 else vals[0]
    return vals.reshape(out_shape)


def _lattice_eval(data: HermiteData | None, node_values, x, cfg: QIConfig, idx, coefs, T=None,
                  on_boundary: str = "raise", threads=None, mode=None):
    n = data.n
    dtype = np.longdouble if node_values.dtype == np.longdouble else np.float64
    pts, out_shape = _as_points(x, n, dtype=dtype)
    degree = int(np.max(np.sum(idx, axis=1))) if len(idx) else 0
    R = cfg.radius(degree, n)
    if T is None:
        T = np.eye(n)
    Tinv = np.linalg.inv(T)
    if dtype == np.float64:
        h, scale = float(data.h), cfg.scale
    else:
        h = np.asarray(data.h, dtype=dtype)[()]
        scale = h * np.sqrt(np.asarray(cfg.D, dtype=dtype))
    w = float(scale) * R * np.sqrt(np.sum(Tinv * Tinv, axis=1)) / float(h)
    if mode is None:
        mode = kernels.CLIP if (data.mask is not None or on_boundary == "clip") else kernels.STRICT
    sums, clipped = kernels.lattice_sum(pts, h, scale, T, R * R, w, idx, coefs, node_values,
                                        data.lo, data.shape, mode, threads=threads)
    if mode == kernels.STRICT and clipped.any():
        bad = pts[np.argmax(clipped)]
        raise WindowError(f"window does not cover the truncation box at x={bad.tolist()}; "
                          f"enlarge the sampled box by at least {R * float(scale):.4g}")
    return _finish(sums, out_shape), clipped


def combined_node_values(Q: QPolynomial, data: HermiteData, cfg: QIConfig) -> np.ndarray:
    """``sum_gamma (-h sqrt(D))^|gamma| a_gamma d^gamma u(hm)`` on the window."""
    out = np.zeros(data.shape, dtype=data.dtype)
    s = cfg.scale
    for gamma, a in Q.coeffs.items():
        out = out + ((-s) ** order(gamma) * float(a)) * data.channel(gamma)
    return out


def evaluate_qi(H: GeneratingFunction, Q: QPolynomial, data: HermiteData, cfg: QIConfig, x,
                on_boundary: str = "raise", threads=None):
    """Hermite quasi-interpolant

        M u(x) = D^{-n/2} sum_m (sum_gamma (-h sqrt D)^|gamma| a_gamma d^gamma u(hm))
                 H((x - hm) / (h sqrt D)).

    ``x`` is one point or an array of points; ``on_boundary="clip"`` sums
    whatever part of the truncation box the window covers instead of raising.
    """
    if H.n != data.n or Q.n != data.n:
        raise ValueError("dimension mismatch between generator, Q and data")
    if H.B is not None:
        raise ValueError("use evaluate_anisotropic_qi for anisotropic generators")
    v = combined_node_values(Q, data, cfg)
    idx, coefs = H.table()
    coefs = coefs * math.pi ** (-data.n / 2)
    val, _ = _lattice_eval(data, v, x, cfg, idx, coefs, on_boundary=on_boundary, threads=threads)
    return val * cfg.D ** (-data.n / 2)


def _operator_node_values(data: HermiteData, kind: str, M: int, cfg: QIConfig) -> np.ndarray:
    out = np.zeros(data.shape, dtype=data.dtype)
    t = cfg.h * cfg.h * cfg.D
    for s in range(M):
        if s == 0:
            chan = data.channels.get(f"{kind}:0")
            if chan is None:
                chan = data.channel(zero(data.n))
        else:
            chan = data.channel(f"{kind}:{s}")
        out = out + ((-t) ** s / (math.factorial(s) * 4 ** s)) * chan
    return out


def _gaussian_sum(data, v, x, cfg, T, prefactor, on_boundary, threads):
    idx = np.zeros((1, data.n), dtype=np.int64)
    coefs = np.array([1.0])
    val, clipped = _lattice_eval(data, v, x, cfg, idx, coefs, T=T, on_boundary=on_boundary, threads=threads)
    return val * prefactor, clipped


def evaluate_laplacian_qi(data: HermiteData, M: int, cfg: QIConfig, x, on_boundary: str = "raise", threads=None):
    """Order-2M Laplacian-power quasi-interpolant with the Gaussian kernel.

    Needs channels ``"lap:s"`` for s = 1..M-1 (``"lap:0"`` defaults to u).
    """
    return evaluate_anisotropic_qi(None, data, M, cfg, x, on_boundary=on_boundary, threads=threads, kind="lap")


def evaluate_anisotropic_qi(B, data: HermiteData, M: int, cfg: QIConfig, x, on_boundary: str = "raise",
                            threads=None, kind: str = "B"):
    """Quasi-interpolant with kernel ``exp(-<B^{-1} y, y> / (h^2 D))``.

    Channels ``"B:s"`` hold ``(sum b_ik d_i d_k)^s u``.  ``B=None`` is the
    identity matrix and runs the identical code path.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    n = data.n
    if B is None:
        T, det_factor = np.eye(n), 1.0
    else:
        B = np.asarray(B, dtype=float)
        T = anisotropy_factor(B)
        det_factor = 1.0 / math.sqrt(np.linalg.det(B))
    v = _operator_node_values(data, kind, M, cfg)
    pref = det_factor * (math.pi * cfg.D) ** (-n / 2)
    val, _ = _gaussian_sum(data, v, x, cfg, T, pref, on_boundary, threads)
    return val


def evaluate_harmonic_qi(data: HermiteData, cfg: QIConfig, x, B=None, threads=None, return_clipped=False):
    """Single-channel Gaussian sum, the quasi-interpolant for harmonic u.

    Samples outside the domain are zero (``data.mask``); with ``B`` the
    anisotropic kernel and ``(det B)^{-1/2}`` prefactor are used.  Extended
    precision data (longdouble) is summed in that precision.
    """
    if cfg.coarse:
        warnings.warn(f"h*sqrt(D) = {cfg.scale:.3g} >= 1: outside the harmonic-limit regime", stacklevel=2)
    n = data.n
    v = data.channel(zero(n))
    if B is None:
        T, det_factor = np.eye(n), 1.0
    else:
        B = np.asarray(B, dtype=float)
        T = anisotropy_factor(B)
        det_factor = 1.0 / math.sqrt(np.linalg.det(B))
    if v.dtype == np.float64:
        pref = det_factor * (math.pi * cfg.D) ** (-n / 2)
    else:
        pi = np.arccos(np.asarray(-1, dtype=v.dtype))
        pref = det_factor * (pi * np.asarray(cfg.D, dtype=v.dtype)) ** (-n / 2)
    val, clipped = _gaussian_sum(data, v, x, cfg, T, pref, "raise", threads)
    return (val, clipped) if return_clipped else val


def boundary_distance(data: HermiteData, x) -> np.ndarray:
    """Distance from x to the edge of the sampled box (or to the masked-out region)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if data.mask is None:
        lo = np.array([e[0] for e in data.extent()])
        hi = np.array([e[1] for e in data.extent()])
        return np.minimum(x - lo, hi - x).min(axis=-1)
    outside = data.points()[~data.mask]
    if len(outside) == 0:
        return boundary_distance(HermiteData(data.h, data.lo, data.shape, {}), x)
    d = np.full(len(x), np.inf)
    for i, p in enumerate(x):
        d[i] = np.sqrt(np.min(np.sum((outside - p) ** 2, axis=-1)))
    return d


@dataclass
class ErrorReport:
    """Pointwise errors ``M u(x) - u(x)`` at a set of evaluation points."""

    points: np.ndarray
    approx: np.ndarray
    exact: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.asarray(self.approx) - np.asarray(self.exact)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.errors))) if len(self.errors) else 0.0

    def rows(self):
        pts = np.atleast_2d(self.points.reshape(len(self.errors), -1))
        for p, e in zip(pts, self.errors):
            yield [*(float(c) for c in p), float(e), abs(float(e))]

    def to_csv(self, path, config: Mapping | None = None) -> None:
        n = np.atleast_2d(self.points.reshape(len(self.errors), -1)).shape[1]
        with open(path, "w", newline="") as fh:
            if config is not None:
                fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([f"x{j + 1}" for j in range(n)] + ["error", "abs_error"])
            for row in self.rows():
                wr.writerow([repr(v) for v in row])
