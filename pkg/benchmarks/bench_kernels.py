#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Covers the five hot loops: RNG stream generation, feature extraction,
KNN selection, CSR matvec, and the exact distance transform. Each kernel
is timed in both flavors (numba warmed up first) and checked for
agreement: bitwise where the implementations promise it, tolerance-based
for the matvec whose accumulation order differs.

Usage:
    python benchmarks/bench_kernels.py [--size N] [--iters I]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gapseg import backend

if not backend.HAS_NUMBA:
    raise SystemExit("numba is not importable; nothing to compare against")

from gapseg.features import FeatureConfig, gaussian_patch_weights, _extract_numpy
from gapseg.features import _extract_numba
from gapseg.graph import _select_rows_numba, _select_rows_numpy
from gapseg.metrics import _edt_sq_numba, _edt_sq_numpy
from gapseg.rng import Xoshiro256StarStar, _fill_u64_numba, _fill_u64_numpy
from gapseg.sparse_linalg import _spmv_numba, _spmv_numpy, csr_from_coo


def timeit(fn, iters):
    best = np.inf
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rng(size, iters):
    gen = Xoshiro256StarStar(0)
    n = size * size * 6
    out = np.empty(n, dtype=np.uint64)

    def run_numpy():
        _fill_u64_numpy(gen._state.copy(), out)

    def run_numba():
        _fill_u64_numba(gen._state.copy(), out)

    run_numba()  # warm up JIT
    a = np.empty(n, dtype=np.uint64)
    b = np.empty(n, dtype=np.uint64)
    _fill_u64_numpy(gen._state.copy(), a)
    _fill_u64_numba(gen._state.copy(), b)
    return timeit(run_numpy, iters), timeit(run_numba, iters), np.array_equal(a, b)


def bench_features(size, iters):
    rng = np.random.default_rng(0)
    samples = rng.standard_normal((size, size, 6)).astype(np.float32)
    config = FeatureConfig(k=3)
    weights = gaussian_patch_weights(config)
    out = np.empty((size * size, config.dim(6)), dtype=np.float32)

    def run_numpy():
        _extract_numpy(samples, config.k, weights)

    def run_numba():
        _extract_numba(samples, config.k, weights, out)

    run_numba()
    a = _extract_numpy(samples, config.k, weights)
    _extract_numba(samples, config.k, weights, out)
    return timeit(run_numpy, iters), timeit(run_numba, iters), np.array_equal(a, out)


def bench_knn_select(size, iters):
    rng = np.random.default_rng(1)
    n = min(size * size // 2, 3000)
    d2 = rng.random((512, n))
    K = 20
    sel = np.empty((512, K), dtype=np.int64)

    def run_numpy():
        _select_rows_numpy(d2, K)

    def run_numba():
        _select_rows_numba(d2, K, sel)

    run_numba()
    a = _select_rows_numpy(d2, K)
    _select_rows_numba(d2, K, sel)
    return timeit(run_numpy, iters), timeit(run_numba, iters), np.array_equal(a, sel)


def bench_spmv(size, iters):
    rng = np.random.default_rng(2)
    n = size * size
    nnz_per_row = 40
    rows = np.repeat(np.arange(n), nnz_per_row)
    cols = rng.integers(0, n, size=n * nnz_per_row)
    vals = rng.random(n * nnz_per_row)
    A = csr_from_coo(rows, cols, vals, (n, n))
    x = rng.standard_normal(n)
    out = np.empty(n)

    def run_numpy():
        _spmv_numpy(A.row_ptr, A.col_idx, A.values, x, n)

    def run_numba():
        _spmv_numba(A.row_ptr, A.col_idx, A.values, x, out)

    run_numba()
    a = _spmv_numpy(A.row_ptr, A.col_idx, A.values, x, n)
    _spmv_numba(A.row_ptr, A.col_idx, A.values, x, out)
    close = np.max(np.abs(a - out)) <= 1e-12 * max(1.0, np.max(np.abs(a)))
    return timeit(run_numpy, iters), timeit(run_numba, iters), close


def bench_edt(size, iters):
    rng = np.random.default_rng(3)
    seeds = rng.random((size, size)) < 0.02

    def run_numpy():
        _edt_sq_numpy(seeds)

    def run_numba():
        _edt_sq_numba(seeds)

    run_numba()
    ok = np.array_equal(_edt_sq_numpy(seeds), _edt_sq_numba(seeds))
    return timeit(run_numpy, iters), timeit(run_numba, iters), ok


BENCHES = {
    "rng stream": bench_rng,
    "feature extraction": bench_features,
    "knn selection": bench_knn_select,
    "csr matvec": bench_spmv,
    "distance transform": bench_edt,
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=128,
                        help="image side length driving problem sizes (default 128)")
    parser.add_argument("--iters", type=int, default=5,
                        help="timing repetitions, best-of (default 5)")
    args = parser.parse_args()

    print(f"problem size {args.size}x{args.size}, best of {args.iters} runs\n")
    print(f"{'kernel':<22} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}  agree")
    print("-" * 68)
    for name, bench in BENCHES.items():
        t_np, t_nb, ok = bench(args.size, args.iters)
        speedup = t_np / t_nb if t_nb > 0 else float("inf")
        flag = "yes" if ok else "NO"
        print(
            f"{name:<22} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} "
            f"{speedup:>8.1f}x  {flag}"
        )


if __name__ == "__main__":
    main()
