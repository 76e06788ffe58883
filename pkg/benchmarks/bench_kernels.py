"""Benchmark the jitted entry kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--m 4000] [--n 3000] [--d 20]
                                       [--density 0.05] [--repeats 7]

The two kernels cover all per-entry work in the solver: predicting observed
entries of a factored product and scattering a sparse residual back against
a factor. Timings are medians over the repeat count; the first jitted call
is excluded as compile time and reported separately.
"""

import argparse
import time

import numpy as np

from schattenfac._kernels import (
    HAVE_NUMBA,
    _dot_rows_cols_numpy,
    _scatter_rows_numpy,
)

if HAVE_NUMBA:
    from schattenfac._kernels import _dot_rows_cols_numba, _scatter_rows_numba


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--m", type=int, default=4000)
    parser.add_argument("--n", type=int, default=3000)
    parser.add_argument("--d", type=int, default=20)
    parser.add_argument("--density", type=float, default=0.05)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n_obs = int(args.density * args.m * args.n)
    flat = np.sort(rng.choice(args.m * args.n, size=n_obs, replace=False))
    rows = np.ascontiguousarray(flat // args.n, dtype=np.int64)
    cols = np.ascontiguousarray(flat % args.n, dtype=np.int64)
    left = rng.standard_normal((args.m, args.d))
    right_t = rng.standard_normal((args.n, args.d))
    weights = rng.standard_normal(n_obs)

    print(f"m={args.m} n={args.n} d={args.d} observed={n_obs}")
    results = {}
    results["dot_rows_cols/numpy"] = median_time(
        lambda: _dot_rows_cols_numpy(left, right_t, rows, cols), args.repeats)
    results["scatter_rows/numpy"] = median_time(
        lambda: _scatter_rows_numpy(weights, rows, cols, right_t, args.m), args.repeats)

    if HAVE_NUMBA:
        t0 = time.perf_counter()
        out = _dot_rows_cols_numba(left, right_t, rows, cols)
        _scatter_rows_numba(weights, rows, cols, right_t, args.m)
        compile_s = time.perf_counter() - t0
        ref = _dot_rows_cols_numpy(left, right_t, rows, cols)
        assert np.allclose(out, ref, rtol=1e-12, atol=1e-12), "kernel mismatch"
        results["dot_rows_cols/numba"] = median_time(
            lambda: _dot_rows_cols_numba(left, right_t, rows, cols), args.repeats)
        results["scatter_rows/numba"] = median_time(
            lambda: _scatter_rows_numba(weights, rows, cols, right_t, args.m), args.repeats)
        print(f"numba warmup (compile or cache load): {compile_s:.3f}s")
    else:
        print("numba not available; benchmarking the numpy path only")

    width = max(len(k) for k in results)
    for name, seconds in results.items():
        print(f"{name:<{width}}  {seconds * 1e3:9.3f} ms")
    if HAVE_NUMBA:
        for kernel in ("dot_rows_cols", "scatter_rows"):
            speedup = results[f"{kernel}/numpy"] / results[f"{kernel}/numba"]
            print(f"{kernel}: numba speedup {speedup:.1f}x")


if __name__ == "__main__":
    main()
