import os
import subprocess
import sys

import numpy as np
import pytest

from hermiteqi import kernels
from hermiteqi.kernels import _numpy

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not available")


def _case(rng, n, mode):
    h, scale = 0.1, 0.1 * np.sqrt(2)
    lo = np.full(n, -40)
    shape = np.full(n, 81)
    values = rng.normal(size=int(np.prod(shape)))
    pts = rng.uniform(-1, 1, size=(25, n))
    R = 6.5
    w = np.full(n, scale * R / h)
    idx = np.array([[0] * n, [1] + [0] * (n - 1), [2] * n], dtype=np.int64)
    coefs = np.array([1.0, -0.5, 0.25])
    return pts, h, scale, np.eye(n), R * R, w, idx, coefs, values, lo, shape, mode


def _brute(pts, h, scale, T, R2, w, idx, coefs, values, lo, shape, mode):
    """Plain double loop over the whole window, no box logic."""
    from scipy.special import eval_hermite

    n = pts.shape[1]
    grid = np.stack(np.meshgrid(*[np.arange(l, l + s) for l, s in zip(lo, shape)], indexing="ij"), -1).reshape(-1, n)
    out = []
    for x in pts:
        z = (x - h * grid) @ T.T / scale
        r2 = np.sum(z * z, axis=1)
        poly = sum(c * np.prod([eval_hermite(b, z[:, j]) for j, b in enumerate(beta)], axis=0) for beta, c in zip(idx, coefs))
        keep = r2 <= R2
        out.append(np.sum((values * poly * np.exp(-r2))[keep]))
    return np.array(out)


@pytest.mark.parametrize("n", [1, 2])
def test_numpy_kernel_vs_brute_force(n, rng):
    args = _case(rng, n, kernels.STRICT)
    got, clipped = kernels.lattice_sum(*args, backend="numpy")
    assert not clipped.any()
    np.testing.assert_allclose(got, _brute(*args), rtol=1e-12, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("n", [1, 2, 3])
def test_numba_matches_numpy(n, rng):
    args = list(_case(rng, n, kernels.STRICT))
    if n == 3:
        args[9], args[10] = np.full(3, -20), np.full(3, 41)
        args[8] = rng.normal(size=41 ** 3)
        args[0] = rng.uniform(-0.5, 0.5, size=(5, 3))
        args[5] = np.full(3, 8.0)
    a, ca = kernels.lattice_sum(*args, backend="numba")
    b, cb = kernels.lattice_sum(*args, backend="numpy")
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)
    assert (ca == cb).all()


@needs_numba
def test_clip_flags_agree(rng):
    args = list(_case(rng, 1, kernels.CLIP))
    args[0] = np.array([[3.5], [0.0], [-3.9]])
    a, ca = kernels.lattice_sum(*args, backend="numba")
    b, cb = kernels.lattice_sum(*args, backend="numpy")
    assert ca.tolist() == cb.tolist() == [True, False, True]
    np.testing.assert_allclose(a, b, rtol=1e-13)


@pytest.mark.parametrize("backend", ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else []))
def test_thread_count_does_not_change_bits(backend, rng):
    args = _case(rng, 2, kernels.STRICT)
    ref, _ = kernels.lattice_sum(*args, backend=backend, threads=1)
    for t in (2, 3, 8):
        got, _ = kernels.lattice_sum(*args, backend=backend, threads=t)
        assert got.tobytes() == ref.tobytes()


def test_longdouble_goes_through_numpy(rng):
    assert kernels.backend_name(np.longdouble) == "numpy"
    args = list(_case(rng, 1, kernels.STRICT))
    args[8] = args[8].astype(np.longdouble)
    args[0] = args[0].astype(np.longdouble)
    got, _ = kernels.lattice_sum(*args)
    assert got.dtype == np.longdouble


def test_env_flag_disables_numba():
    code = "from hermiteqi import kernels; print(kernels.HAVE_NUMBA, kernels.backend_name())"
    env = dict(os.environ, HERMITEQI_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "numpy"]


def test_compensated_sum_numpy_path():
    # terms that cancel catastrophically in naive left-to-right order
    pts = np.zeros((1, 1))
    vals = np.array([1e16, 1.0, -1e16, 1.0])
    got, _ = _numpy.lattice_sum(pts, 1e-9, 1.0, np.eye(1), 1.0, np.array([10.0]), np.zeros((1, 1), dtype=np.int64),
                                np.array([1.0]), vals, np.array([-2]), np.array([4]), kernels.STRICT)
    assert got[0] == 2.0
