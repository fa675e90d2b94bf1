"""Hot lattice-sum kernels.

numba is used when importable unless ``HERMITEQI_NUMBA=0`` is set, in which
case (or for non-float64 data) the pure-numpy path runs instead.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _numpy
from ._numpy import CLIP, STRICT, UNIT


def _numba_wanted() -> bool:
    return os.environ.get("HERMITEQI_NUMBA", "1").strip().lower() not in {"0", "false", "no", "off"}


try:
    if not _numba_wanted():
        raise ImportError
    from . import _numba
    HAVE_NUMBA = True
except ImportError:
    _numba = None
    HAVE_NUMBA = False

_default_threads = 1


def set_threads(n: int) -> None:
    global _default_threads
    _default_threads = max(1, int(n))


def backend_name(dtype=np.float64) -> str:
    return "numba" if HAVE_NUMBA and np.dtype(dtype) == np.float64 else "numpy"


def lattice_sum(points, h, scale, T, R2, w, idx, coefs, values=None, lo=None, shape=None,
                mode=STRICT, threads=None, backend=None):
    """Dispatch the lattice sum over points, optionally across threads.

    Each point is summed sequentially by one worker, so the result does not
    depend on ``threads``.
    """
    points = np.ascontiguousarray(points)
    dtype = np.result_type(points.dtype, values.dtype if values is not None else np.float64)
    n = points.shape[1]
    if mode == UNIT:
        values = np.zeros(1, dtype=dtype)
        lo = np.zeros(n, dtype=np.int64)
        shape = np.ones(n, dtype=np.int64)
    lo = np.asarray(lo, dtype=np.int64)
    shape = np.asarray(shape, dtype=np.int64)
    idx = np.ascontiguousarray(idx, dtype=np.int64).reshape(-1, n)
    coefs = np.ascontiguousarray(coefs, dtype=np.float64)
    T = np.ascontiguousarray(T, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if backend is None:
        backend = backend_name(dtype)
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        fn = _numba.lattice_sum
        points = points.astype(np.float64)
        values = np.ascontiguousarray(values, dtype=np.float64).ravel()
        args = (float(h), float(scale), T, float(R2), w, idx, coefs, values, lo, shape, int(mode))
    else:
        fn = _numpy.lattice_sum
        values = np.ascontiguousarray(values).ravel()
        args = (h, scale, T, R2, w, idx, coefs, values, lo, shape, mode)
    threads = _default_threads if threads is None else max(1, int(threads))
    P = len(points)
    if threads == 1 or P < 2 * threads:
        return fn(points, *args)
    chunks = np.array_split(np.arange(P), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ix: fn(points[ix], *args), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


__all__ = ["lattice_sum", "set_threads", "backend_name", "HAVE_NUMBA", "STRICT", "CLIP", "UNIT"]
