"""numba versions of the lattice sums.

No fastmath: the compensated accumulation relies on strict IEEE ordering.
"""
import math

import numba as nb
import numpy as np

STRICT, CLIP, UNIT = 0, 1, 2


@nb.njit(cache=True, nogil=True)
def lattice_sum(points, h, scale, T, R2, w, idx, coefs, values, lo, shape, mode):
    P, n = points.shape
    K = idx.shape[0]
    kmax = 0
    for k in range(K):
        for j in range(n):
            if idx[k, j] > kmax:
                kmax = idx[k, j]
    out = np.zeros(P)
    clipped = np.zeros(P, dtype=np.bool_)
    strides = np.ones(n, dtype=np.int64)
    for j in range(n - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    mlo = np.empty(n, dtype=np.int64)
    mhi = np.empty(n, dtype=np.int64)
    m = np.empty(n, dtype=np.int64)
    y = np.empty(n)
    z = np.empty(n)
    hv = np.empty((n, kmax + 1))
    for p in range(P):
        empty = False
        for j in range(n):
            a = math.ceil(points[p, j] / h - w[j])
            b = math.floor(points[p, j] / h + w[j])
            if mode != UNIT:
                top = lo[j] + shape[j] - 1
                if a < lo[j] or b > top:
                    clipped[p] = True
                if a < lo[j]:
                    a = lo[j]
                if b > top:
                    b = top
            mlo[j] = a
            mhi[j] = b
            if a > b:
                empty = True
        if empty:
            continue
        s = 0.0
        comp = 0.0
        for j in range(n):
            m[j] = mlo[j]
        while True:
            for j in range(n):
                y[j] = points[p, j] - h * m[j]
            r2 = 0.0
            for i in range(n):
                acc = 0.0
                for k in range(n):
                    acc += T[i, k] * y[k]
                z[i] = acc / scale
                r2 += z[i] * z[i]
            if r2 <= R2:
                if mode == UNIT:
                    v = 1.0
                else:
                    flat = 0
                    for j in range(n):
                        flat += (m[j] - lo[j]) * strides[j]
                    v = values[flat]
                if v != 0.0:
                    for j in range(n):
                        hv[j, 0] = 1.0
                        if kmax >= 1:
                            hv[j, 1] = 2.0 * z[j]
                        for q in range(1, kmax):
                            hv[j, q + 1] = 2.0 * z[j] * hv[j, q] - 2.0 * q * hv[j, q - 1]
                    poly = 0.0
                    for k in range(K):
                        t = coefs[k]
                        for j in range(n):
                            t *= hv[j, idx[k, j]]
                        poly += t
                    term = v * poly * math.exp(-r2)
                    # Neumaier compensated summation
                    tot = s + term
                    if abs(s) >= abs(term):
                        comp += (s - tot) + term
                    else:
                        comp += (term - tot) + s
                    s = tot
            j = n - 1
            while j >= 0:
                m[j] += 1
                if m[j] <= mhi[j]:
                    break
                m[j] = mlo[j]
                j -= 1
            if j < 0:
                break
        out[p] = s + comp
    return out, clipped
