"""Hot kernel-sum loops, compiled with numba when available.

Set ``COMMITMOTION_NUMBA=0`` in the environment to force the pure-numpy
path (useful for debugging and for the backend comparison benchmark).
The flag is read once at import time.
"""

from __future__ import annotations

import os

import numpy as np

_WANT_NUMBA = os.environ.get("COMMITMOTION_NUMBA", "1").strip().lower() not in {"0", "false", "no", "off"}

try:
    if not _WANT_NUMBA:
        raise ImportError("numba disabled by COMMITMOTION_NUMBA")
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"

_UNDERFLOW_Q = 1500.0

# max query*sample pairs materialised at once by the numpy path
_NUMPY_BLOCK = 1 << 21


def _kernel_sum_numpy(queries, samples, inv_h, weights):
    m = queries.shape[0]
    n = samples.shape[0]
    out = np.empty(m, dtype=np.float64)
    if n == 0:
        out[:] = 0.0
        return out
    step = max(1, _NUMPY_BLOCK // n)
    scaled_samples = samples * inv_h
    scaled_queries = queries * inv_h
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        z = scaled_queries[lo:hi, None, :] - scaled_samples[None, :, :]
        e = np.exp(-0.5 * np.einsum("ijk,ijk->ij", z, z))
        # row-wise reduction keeps each query's sum independent of the chunking
        out[lo:hi] = (e * weights).sum(axis=1)
    return out


if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True, fastmath=False)
    def _kernel_sum_numba(queries, samples, inv_h, weights):
        m, d = queries.shape
        n = samples.shape[0]
        qs = queries * inv_h
        ss = samples * inv_h
        out = np.empty(m, dtype=np.float64)
        for i in range(m):
            acc = 0.0
            for k in range(n):
                wk = weights[k]
                if wk == 0.0:
                    continue
                q = 0.0
                for j in range(d):
                    z = qs[i, j] - ss[k, j]
                    q += z * z
                # exp(-0.5 * q) is exactly 0.0 beyond this point
                if q < _UNDERFLOW_Q:
                    acc += wk * np.exp(-0.5 * q)
            out[i] = acc
        return out


def kernel_sum(queries: np.ndarray, samples: np.ndarray, inv_h: np.ndarray,
               weights: np.ndarray | None = None) -> np.ndarray:
    """Per-query sum of ``w_k * exp(-|(q - s_k) / h|^2 / 2)`` over samples.

    Unnormalised; callers apply the Gaussian normalising constant.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    inv_h = np.ascontiguousarray(inv_h, dtype=np.float64)
    if weights is None:
        weights = np.ones(samples.shape[0], dtype=np.float64)
    else:
        weights = np.ascontiguousarray(weights, dtype=np.float64)
    if queries.ndim != 2 or samples.ndim != 2 or queries.shape[1] != samples.shape[1]:
        raise ValueError("queries and samples must be 2-D with matching column counts")
    if HAS_NUMBA:
        return _kernel_sum_numba(queries, samples, inv_h, weights)
    return _kernel_sum_numpy(queries, samples, inv_h, weights)


def kernel_sum_numpy(queries, samples, inv_h, weights=None) -> np.ndarray:
    """Numpy path regardless of the backend flag (benchmarks and cross-checks)."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    inv_h = np.asarray(inv_h, dtype=np.float64)
    w = np.ones(samples.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    return _kernel_sum_numpy(queries, samples, inv_h, w)


def kernel_sum_chunked(queries, samples, inv_h, weights=None, workers: int = 1) -> np.ndarray:
    """:func:`kernel_sum` with queries split across a thread pool.

    Each query's sum is computed by exactly one worker in a fixed sample
    order, so the result does not depend on ``workers``.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if workers <= 1 or len(queries) < 2 * workers:
        return kernel_sum(queries, samples, inv_h, weights)
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, len(queries), workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda ab: kernel_sum(queries[ab[0]:ab[1]], samples, inv_h, weights),
                            zip(bounds[:-1], bounds[1:])))
    return np.concatenate(parts)
