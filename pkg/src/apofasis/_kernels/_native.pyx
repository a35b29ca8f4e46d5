# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled DP kernels for word-sequence alignment.

Both functions operate on int32 id sequences (callers intern words to ids).
`lcs_flags` keeps the full DP table, so memory is quadratic in the input
lengths; document-scale inputs (a few thousand words) are fine.
"""

from libc.stdlib cimport malloc, free
from libc.string cimport memset


def levenshtein(int[::1] a, int[::1] b):
    """Unit-cost edit distance between two id sequences (two-row DP)."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n

    cdef int *prev = <int *> malloc((m + 1) * sizeof(int))
    cdef int *curr = <int *> malloc((m + 1) * sizeof(int))
    if prev == NULL or curr == NULL:
        if prev != NULL:
            free(prev)
        if curr != NULL:
            free(curr)
        raise MemoryError()

    cdef Py_ssize_t i, j
    cdef int cost, best
    cdef int *tmp
    try:
        for j in range(m + 1):
            prev[j] = <int> j
        for i in range(1, n + 1):
            curr[0] = <int> i
            for j in range(1, m + 1):
                cost = 0 if a[i - 1] == b[j - 1] else 1
                best = prev[j - 1] + cost
                if prev[j] + 1 < best:
                    best = prev[j] + 1
                if curr[j - 1] + 1 < best:
                    best = curr[j - 1] + 1
                curr[j] = best
            tmp = prev
            prev = curr
            curr = tmp
        return prev[m]
    finally:
        free(prev)
        free(curr)


def lcs_flags(int[::1] a, int[::1] b):
    """Mark which positions of `a` lie on a longest common subsequence with `b`.

    Returns a bytes object of length len(a) with 1 at aligned positions.
    Backtrace ties prefer consuming from `a` (deterministic across backends).
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef bytearray out = bytearray(n)
    if n == 0 or m == 0:
        return bytes(out)

    cdef int *dp = <int *> malloc((n + 1) * (m + 1) * sizeof(int))
    if dp == NULL:
        raise MemoryError()

    cdef Py_ssize_t i, j, w = m + 1
    cdef int up, left
    try:
        memset(dp, 0, (n + 1) * (m + 1) * sizeof(int))
        for i in range(1, n + 1):
            for j in range(1, m + 1):
                if a[i - 1] == b[j - 1]:
                    dp[i * w + j] = dp[(i - 1) * w + (j - 1)] + 1
                else:
                    up = dp[(i - 1) * w + j]
                    left = dp[i * w + (j - 1)]
                    dp[i * w + j] = up if up >= left else left
        i = n
        j = m
        while i > 0 and j > 0:
            if a[i - 1] == b[j - 1]:
                out[i - 1] = 1
                i -= 1
                j -= 1
            elif dp[(i - 1) * w + j] >= dp[i * w + (j - 1)]:
                i -= 1
            else:
                j -= 1
        return bytes(out)
    finally:
        free(dp)
