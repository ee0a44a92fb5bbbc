#!/usr/bin/env python3
"""Benchmark the compiled band kernels against the numpy fallback.

Times the three hot operator applications (forward on the cross-covariance,
adjoint, and row application to spectra) for both backends across a few
problem sizes, and an end-to-end bank screening.  Run after building the
extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from opfold import operators as ops
from opfold._kernels import bandops_np

try:
    from opfold._kernels import bandops
except ImportError:
    bandops = None


def _best_of(fn, repeats=7):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernel(impl, band, M, X, repeats=7):
    data, starts, lengths = band
    p = data.shape[0]
    out_l = np.zeros((p, M.shape[1]))
    out_r = np.zeros((X.shape[0], p))

    def left():
        out_l[:] = 0.0
        impl.band_apply_left(data, starts, lengths, M, out_l)

    def right():
        out_r[:] = 0.0
        impl.band_apply_right(data, starts, lengths, X, out_r)

    return _best_of(left, repeats), _best_of(right, repeats)


def main():
    rng = np.random.default_rng(0)
    print(f"{'size':<22}{'kernel':<10}{'numpy (ms)':>12}{'compiled (ms)':>15}{'speedup':>9}")
    for (p, q, n) in [(256, 1, 500), (1024, 1, 500), (1024, 4, 2000), (4096, 1, 1000)]:
        op = ops.build_operator(ops.savgol_deriv(21, 2, 1), p)
        band = (op._band.data, op._band.starts, op._band.lengths)
        M = rng.standard_normal((p, q))
        X = rng.standard_normal((n, p))
        t_np = bench_kernel(bandops_np, band, M, X)
        if bandops is not None:
            t_cy = bench_kernel(bandops, band, M, X)
        else:
            t_cy = (np.nan, np.nan)
        for name, tn, tc in (("forward", t_np[0], t_cy[0]), ("rows", t_np[1], t_cy[1])):
            speed = tn / tc if tc == tc else float("nan")
            print(f"p={p:<5}q={q:<3}n={n:<6} {name:<10}{tn * 1e3:>12.3f}{tc * 1e3:>15.3f}{speed:>8.1f}x")

    # end-to-end: screening the compact bank on a precomputed cross-covariance
    import os

    p = 2048
    S = rng.standard_normal((p, 1))
    bank = ops.compact_bank(p)

    def screen():
        for op in bank.ops:
            op.forward(S)

    t = _best_of(screen)
    backend = "compiled" if bandops is not None and not os.environ.get(
        "OPFOLD_DISABLE_EXTENSION") else "numpy"
    print(f"\nbank screening at p={p} ({backend} backend): {t * 1e3:.3f} ms")
    if bandops is None:
        print("compiled extension not built; numpy fallback only")


if __name__ == "__main__":
    main()
