"""Pure-numpy lattice sums.  Reference path, and the only one for longdouble."""
import math

import numpy as np

from ..special import hermite_table

STRICT, CLIP, UNIT = 0, 1, 2


def _box(xp, h, w, lo, hi_incl, mode):
    mlo = np.ceil(xp / h - w).astype(np.int64)
    mhi = np.floor(xp / h + w).astype(np.int64)
    clipped = False
    if mode != UNIT:
        if np.any(mlo < lo) or np.any(mhi > hi_incl):
            clipped = True
        mlo = np.maximum(mlo, lo)
        mhi = np.minimum(mhi, hi_incl)
    return mlo, mhi, clipped


def lattice_sum(points, h, scale, T, R2, w, idx, coefs, values, lo, shape, mode):
    """Sum ``v_m P(z_m) exp(-|z_m|^2)`` with ``z_m = T (x - h m) / scale``.

    Only lattice points with ``|z_m|^2 <= R2`` contribute; ``P`` is the
    Hermite expansion given by ``idx``/``coefs``.  Terms are accumulated in
    lattice order (last axis fastest).  Returns ``(sums, clipped)``.
    """
    P, n = points.shape
    dtype = np.result_type(points.dtype, values.dtype if values is not None else np.float64)
    out = np.zeros(P, dtype=dtype)
    clipped = np.zeros(P, dtype=bool)
    lo = np.asarray(lo, dtype=np.int64)
    hi_incl = lo + np.asarray(shape, dtype=np.int64) - 1
    kmax = int(idx.max()) if idx.size else 0
    vals_nd = None if mode == UNIT else values.reshape(tuple(shape))
    exact_sum = dtype == np.float64
    for p in range(P):
        xp = points[p]
        mlo, mhi, clipped[p] = _box(xp, h, w, lo, hi_incl, mode)
        if np.any(mlo > mhi):
            continue
        axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(mlo, mhi)]
        grid = np.meshgrid(*axes, indexing="ij")
        m = np.stack([g.ravel() for g in grid], axis=-1)
        y = xp[None, :] - h * m.astype(dtype)
        z = (y @ T.T.astype(dtype)) / scale
        r2 = np.sum(z * z, axis=-1)
        keep = r2 <= R2
        if mode == UNIT:
            v = np.ones(int(keep.sum()), dtype=dtype)
        else:
            v = vals_nd[tuple((m[keep] - lo).T)]
        z, r2 = z[keep], r2[keep]
        poly = np.zeros(len(r2), dtype=dtype)
        tabs = [hermite_table(kmax, z[:, j]) for j in range(n)]
        for beta, c in zip(idx, coefs):
            term = np.full(len(r2), c, dtype=dtype)
            for j in range(n):
                term = term * tabs[j][beta[j]]
            poly += term
        terms = v * poly * np.exp(-r2)
        out[p] = math.fsum(terms) if exact_sum else np.sum(terms, dtype=dtype)
    return out, clipped
