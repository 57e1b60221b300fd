"""Benchmark the compiled scan kernels against the pure-numpy fallback.

Runs the threshold-crossing scans (the inner loop of the table sweeps) on a
grid of problem sizes and stepsizes, checks that both engines return the
same crossing step, and reports wall times.

Usage: python3 benchmarks/bench_scan.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from curvnoise.quadsim import _scan_numpy

try:
    from curvnoise.quadsim import _kernels
except ImportError:
    _kernels = None


def bench_once(impl, d, alpha, gamma, nmax, rng):
    h = np.arange(1, d + 1, dtype=float) ** 2
    s = np.full(d, 1.0)
    theta0 = np.ones(d)
    eps = 1e-6  # unreachable: force the full nmax steps

    sigma = theta0**2
    t0 = time.perf_counter()
    r_sg = impl.sg_scan(h, np.ones(d), s, sigma.copy(), alpha, eps, nmax)
    t_sg = time.perf_counter() - t0

    st = np.vstack([theta0**2, (h * theta0) ** 2 + s, h * theta0**2])
    t0 = time.perf_counter()
    r_po = impl.polyak_scan(h, s, st.copy(), alpha, gamma, eps, nmax)
    t_po = time.perf_counter() - t0
    return (r_sg, r_po), (t_sg, t_po)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--nmax", type=int, default=20_000)
    args = ap.parse_args()

    if _kernels is None:
        print("compiled kernels unavailable; benchmarking fallback only")
    rng = np.random.default_rng(0)

    print(f"{'d':>6} {'kernel':>8} {'numpy_ms':>10} {'cython_ms':>10} {'speedup':>8}")
    for d in (20, 200, 2000):
        alpha = 0.5 / d**2
        times = {"numpy": [0.0, 0.0], "cython": [0.0, 0.0]}
        for _ in range(args.repeats):
            res_np, t_np = bench_once(_scan_numpy, d, alpha, 0.9, args.nmax, rng)
            times["numpy"][0] += t_np[0]
            times["numpy"][1] += t_np[1]
            if _kernels is not None:
                res_cy, t_cy = bench_once(_kernels, d, alpha, 0.9, args.nmax, rng)
                assert res_cy == res_np, (res_cy, res_np)
                times["cython"][0] += t_cy[0]
                times["cython"][1] += t_cy[1]
        for k, name in enumerate(("sg", "polyak")):
            np_ms = 1e3 * times["numpy"][k] / args.repeats
            if _kernels is None:
                print(f"{d:>6} {name:>8} {np_ms:>10.2f} {'-':>10} {'-':>8}")
            else:
                cy_ms = 1e3 * times["cython"][k] / args.repeats
                print(
                    f"{d:>6} {name:>8} {np_ms:>10.2f} {cy_ms:>10.2f} "
                    f"{np_ms / cy_ms:>7.1f}x"
                )
    if _kernels is not None:
        print("engines agree on all crossing counts")


if __name__ == "__main__":
    main()
