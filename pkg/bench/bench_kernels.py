#!/usr/bin/env python3
"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run with the environment as-is (numba on) — the script also times the
fallback implementations directly, so one invocation compares both paths:

    python bench/bench_kernels.py
"""

import time

import numpy as np

from resketch import kernels
from resketch.kernels import NUMBA_ENABLED, _bm25_accumulate_numpy, _lcs_table_numpy


def timeit(fn, repeat=5):
    fn()  # warm (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lcs():
    rng = np.random.default_rng(0)
    pairs = [(rng.integers(0, 40, size=96).astype(np.int64),
              rng.integers(0, 40, size=96).astype(np.int64))
             for _ in range(500)]

    def run(table_fn):
        def body():
            for a, b in pairs:
                table_fn(a, b)
        return body

    print("LCS table fill, 500 pairs of 96x96:")
    fallback = timeit(run(_lcs_table_numpy))
    print(f"  numpy fallback: {fallback * 1e3:8.1f} ms")
    if NUMBA_ENABLED:
        jitted = timeit(run(kernels.lcs_table))
        print(f"  numba @njit:    {jitted * 1e3:8.1f} ms   "
              f"({fallback / jitted:.1f}x)")
    else:
        print("  numba @njit:    (disabled)")


def bench_bm25():
    rng = np.random.default_rng(1)
    n_docs = 20_000
    norms = rng.uniform(0.4, 1.8, size=n_docs)
    chunks, tfs, offsets, idfs = [], [], [0], []
    for _ in range(8):
        df = int(rng.integers(n_docs // 20, n_docs // 2))
        docs = rng.choice(n_docs, size=df, replace=False)
        docs.sort()
        chunks.append(docs.astype(np.int32))
        tfs.append(rng.integers(1, 5, size=df).astype(np.float64))
        offsets.append(offsets[-1] + df)
        idfs.append(float(rng.uniform(0.1, 3.0)))
    args = (np.concatenate(chunks), np.concatenate(tfs),
            np.array(offsets, dtype=np.int64),
            np.array(idfs, dtype=np.float64), norms, 1.2)

    def run(acc_fn):
        def body():
            for _ in range(50):
                acc_fn(np.zeros(n_docs), *args)
        return body

    print(f"BM25 accumulation, 50 queries x 8 terms over {n_docs} docs:")
    fallback = timeit(run(_bm25_accumulate_numpy))
    print(f"  numpy fallback: {fallback * 1e3:8.1f} ms")
    if NUMBA_ENABLED:
        jitted = timeit(run(kernels.bm25_accumulate))
        print(f"  numba @njit:    {jitted * 1e3:8.1f} ms   "
              f"({fallback / jitted:.1f}x)")
        out_a = kernels.bm25_accumulate(np.zeros(n_docs), *args)
        out_b = _bm25_accumulate_numpy(np.zeros(n_docs), *args)
        print(f"  bitwise equal:  {np.array_equal(out_a, out_b)}")
    else:
        print("  numba @njit:    (disabled)")


if __name__ == "__main__":
    print(f"numba enabled: {NUMBA_ENABLED} "
          f"(set RESKETCH_NUMBA=0 to force the fallback)\n")
    bench_lcs()
    print()
    bench_bm25()
