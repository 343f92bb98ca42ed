# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled distance kernel for batch token scoring.

Each (query, candidate) squared distance is ||q||^2 + ||c||^2 - 2 q.c with
negatives clamped to zero. Dot products and squared norms share one fixed
16-lane accumulation tree, so results are bit-identical regardless of query
tiling or thread count, and a token matched against itself yields exactly
zero. Lanes accumulate in float32 (full SIMD width on the hot path); the
lane combine and the Gram combination run in float64.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

DEF LANES = 16


cdef inline double _dot(const float* a, const float* b, Py_ssize_t d) noexcept nogil:
    # independent accumulator lanes with a fixed combination order: the
    # compiler may vectorize freely without changing the summation tree
    cdef float acc[LANES]
    cdef float rem = 0.0
    cdef double pair[LANES / 2]
    cdef double quad[LANES / 4]
    cdef Py_ssize_t k = 0, l
    cdef Py_ssize_t dl = d - (d % LANES)
    for l in range(LANES):
        acc[l] = 0.0
    while k < dl:
        for l in range(LANES):
            acc[l] += a[k + l] * b[k + l]
        k += LANES
    while k < d:
        rem += a[k] * b[k]
        k += 1
    for l in range(LANES / 2):
        pair[l] = (<double> acc[2 * l]) + (<double> acc[2 * l + 1])
    for l in range(LANES / 4):
        quad[l] = pair[2 * l] + pair[2 * l + 1]
    return ((quad[0] + quad[1]) + (quad[2] + quad[3])) + (<double> rem)


def row_sqnorms(const float[:, ::1] x):
    """Squared l2 norm of every row, float64."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(n):
        ov[i] = _dot(&x[i, 0], &x[i, 0], d)
    return out


def min_sqdist(const float[:, ::1] queries,
               const float[:, ::1] cands,
               const double[::1] cand_sqnorms,
               int threads):
    """Minimum squared distance from each query row to any candidate row.

    Returns float32 [n_queries]. ``cand_sqnorms`` must come from
    ``row_sqnorms(cands)``.
    """
    cdef Py_ssize_t m = queries.shape[0]
    cdef Py_ssize_t n = cands.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    if cands.shape[1] != d:
        raise ValueError("query/candidate dimension mismatch")
    if cand_sqnorms.shape[0] != n:
        raise ValueError("cand_sqnorms length mismatch")
    if n == 0:
        raise ValueError("empty candidate set")
    if threads < 1:
        threads = 1

    out = np.empty(m, dtype=np.float32)
    cdef float[::1] ov = out
    best_arr = np.full(m, np.inf, dtype=np.float64)
    cdef double[::1] best = best_arr
    qq_arr = row_sqnorms(queries)
    cdef double[::1] qq = qq_arr

    # stream candidates in L2-sized panels reused across all queries; the
    # min over j is order-exact, so panelization cannot change any result
    cdef Py_ssize_t panel = 24576 // d if d <= 12288 else 2
    if panel < 1:
        panel = 1
    cdef Py_ssize_t i, j, jstart, jend
    cdef double sq, local
    for jstart in range(0, n, panel):
        jend = jstart + panel
        if jend > n:
            jend = n
        for i in prange(m, nogil=True, schedule="static", num_threads=threads):
            local = best[i]
            for j in range(jstart, jend):
                sq = qq[i] + cand_sqnorms[j] - 2.0 * _dot(&queries[i, 0], &cands[j, 0], d)
                if sq < 0.0:
                    sq = 0.0
                if sq < local:
                    local = sq
            best[i] = local
    for i in range(m):
        ov[i] = <float> best[i]
    return out
