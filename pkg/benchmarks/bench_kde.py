"""Kernel-sum throughput: compiled (numba) path against the pure-numpy path.

    python benchmarks/bench_kde.py [--samples N] [--queries M] [--repeat R]

Both paths evaluate the same 4-D product-Gaussian sum used by the
commitment model; the script also reports the largest relative difference
between them.
"""

import argparse
import time

import numpy as np

from commitmotion import _accel


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--queries", type=int, default=5_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    scale = np.array([15.0, 15.0, 3.0, 1.5])
    samples = rng.normal(size=(args.samples, 4)) * scale
    queries = rng.normal(size=(args.queries, 4)) * scale
    inv_h = 1.0 / (scale * args.samples ** -0.125)
    pairs = args.samples * args.queries

    print(f"backend selected at import: {_accel.BACKEND}")
    print(f"{args.queries} queries x {args.samples} samples = {pairs:.2e} kernel evaluations")

    t_np, ref = best_of(lambda: _accel.kernel_sum_numpy(queries, samples, inv_h), args.repeat)
    print(f"numpy          {t_np:8.3f} s  {t_np / pairs * 1e9:6.1f} ns/pair")
    if not _accel.HAS_NUMBA:
        print("numba unavailable or disabled (COMMITMOTION_NUMBA=0); nothing to compare")
        return

    _accel.kernel_sum(queries[:2], samples[:2], inv_h)  # compile outside the timing
    t_nb, out = best_of(lambda: _accel.kernel_sum(queries, samples, inv_h), args.repeat)
    print(f"numba          {t_nb:8.3f} s  {t_nb / pairs * 1e9:6.1f} ns/pair  x{t_np / t_nb:.1f}")
    t_mt, out_mt = best_of(lambda: _accel.kernel_sum_chunked(queries, samples, inv_h, workers=args.workers),
                           args.repeat)
    print(f"numba x{args.workers:<2} thr  {t_mt:8.3f} s  {t_mt / pairs * 1e9:6.1f} ns/pair  x{t_np / t_mt:.1f}")

    rel = np.abs(out - ref) / np.maximum(np.abs(ref), 1e-300)
    print(f"max rel diff numba vs numpy: {rel.max():.2e}")
    print(f"threaded result identical to serial: {np.array_equal(out, out_mt)}")


if __name__ == "__main__":
    main()
