"""Time the lattice-sum kernel: numba against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--points 2000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from hermiteqi import kernels
from hermiteqi.experiments import window
from hermiteqi.interpolant import QIConfig, combined_node_values, sample_on_window
from hermiteqi.moments import QPolynomial, build_hermite_generator
from hermiteqi.testfunctions import cosine


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    cli = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    rows = []
    for n, h in ((1, 0.01), (2, 0.05)):
        Q = QPolynomial.unit(n, 4)
        H = build_hermite_generator(Q)
        cfg = QIConfig(h, 2.0, 4)
        u = cosine(n)
        data = sample_on_window(u.closures(Q.coeffs), h, window([(-1.0, 1.0)] * n, cfg, H.degree, n))
        x = rng.uniform(-1, 1, (cli.points, n))
        v = combined_node_values(Q, data, cfg)
        idx, coefs = H.table()
        R = cfg.radius(H.degree, n)
        w = np.full(n, cfg.scale * R / h)
        kargs = (x, h, cfg.scale, np.eye(n), R * R, w, idx, coefs, v, data.lo, data.shape, kernels.STRICT)
        timings = {}
        results = {}
        for backend in ("numpy", "numba"):
            if backend == "numba" and not kernels.HAVE_NUMBA:
                continue
            fn = lambda: kernels.lattice_sum(*kargs, threads=cli.threads, backend=backend)[0]
            fn()  # warm-up, compiles the numba kernel
            timings[backend], results[backend] = best_of(fn, cli.repeat)
        diff = float(np.max(np.abs(results["numpy"] - results.get("numba", results["numpy"]))))
        rows.append((n, h, timings, diff))

    print(f"{'n':>2} {'h':>6} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max diff':>9}")
    for n, h, t, diff in rows:
        nb = t.get("numba", float("nan"))
        print(f"{n:>2} {h:>6g} {t['numpy']:>10.4f} {nb:>10.4f} {t['numpy'] / nb:>8.1f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
