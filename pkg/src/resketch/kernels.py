"""Hot numeric kernels: numba-jitted versions with pure-numpy fallbacks.

The jitted path is used when numba imports cleanly and the environment
variable ``RESKETCH_NUMBA`` is not set to ``0``/``off``/``false``.  Both
paths are exact: the LCS tables are integer dynamic programs, and the BM25
accumulators add per-term contributions in the same order, so scores agree
bitwise.  ``bench/bench_kernels.py`` compares the two paths.
"""

import os

import numpy as np


def _want_numba() -> bool:
    flag = os.environ.get("RESKETCH_NUMBA", "").strip().lower()
    if flag in {"0", "off", "false", "no"}:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _want_numba()


# -- LCS dynamic program ----------------------------------------------------
#
# table[i, j] = length of the longest common subsequence of a[:i] and b[:j].

def _lcs_table_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape[0], b.shape[0]
    table = np.zeros((n + 1, m + 1), dtype=np.int32)
    if m == 0 or n == 0:
        return table
    for i in range(1, n + 1):
        prev = table[i - 1]
        # candidate[j-1] covers both the diagonal-match and the drop-from-a
        # moves; the running maximum folds in the drop-from-b move exactly.
        cand = np.where(b == a[i - 1], prev[:-1] + np.int32(1), np.int32(0))
        np.maximum(cand, prev[1:], out=cand)
        np.maximum.accumulate(cand, out=table[i, 1:])
    return table


def _lcs_table_py(a, b):  # pragma: no cover - numba compiles this body
    n = a.shape[0]
    m = b.shape[0]
    table = np.zeros((n + 1, m + 1), dtype=np.int32)
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                up = table[i - 1, j]
                left = table[i, j - 1]
                table[i, j] = up if up >= left else left
    return table


# -- BM25 accumulation -------------------------------------------------------
#
# For each query term t (in query order), every document d in t's postings
# receives idf_t * tf * (k1 + 1) / (tf + k1 * norm_d).  Each document gets at
# most one addition per term occurrence, so the accumulation order is
# identical between the two paths.

def _bm25_accumulate_numpy(scores, doc_pos, tfs, offsets, idfs, norms, k1):
    for t in range(offsets.shape[0] - 1):
        lo, hi = offsets[t], offsets[t + 1]
        if lo == hi:
            continue
        pos = doc_pos[lo:hi]
        tf = tfs[lo:hi]
        scores[pos] += idfs[t] * tf * (k1 + 1.0) / (tf + k1 * norms[pos])
    return scores


def _bm25_accumulate_py(scores, doc_pos, tfs, offsets, idfs, norms, k1):  # pragma: no cover
    for t in range(offsets.shape[0] - 1):
        idf = idfs[t]
        for p in range(offsets[t], offsets[t + 1]):
            d = doc_pos[p]
            tf = tfs[p]
            scores[d] += idf * tf * (k1 + 1.0) / (tf + k1 * norms[d])
    return scores


if NUMBA_ENABLED:
    from numba import njit

    lcs_table = njit(cache=True)(_lcs_table_py)
    bm25_accumulate = njit(cache=True)(_bm25_accumulate_py)
else:
    lcs_table = _lcs_table_numpy
    bm25_accumulate = _bm25_accumulate_numpy
