"""Pure-Python fallback for the compiled alignment kernels.

Same contracts and tie-breaking as ``_native``; used when the extension is
unavailable or when APOFASIS_PURE_KERNELS=1 is set.
"""

from __future__ import annotations


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two id sequences (two-row DP)."""
    a = list(a)
    b = list(b)
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        curr = [i] + [0] * m
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            curr[j] = min(prev[j - 1] + cost, prev[j] + 1, curr[j - 1] + 1)
        prev = curr
    return prev[m]


def lcs_flags(a, b) -> bytes:
    """Mark which positions of `a` lie on a longest common subsequence with `b`.

    Returns a bytes object of length len(a) with 1 at aligned positions.
    Backtrace ties prefer consuming from `a` (deterministic across backends).
    """
    a = list(a)
    b = list(b)
    n, m = len(a), len(b)
    out = bytearray(n)
    if n == 0 or m == 0:
        return bytes(out)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        ai = a[i - 1]
        row = dp[i]
        above = dp[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                row[j] = above[j - 1] + 1
            else:
                up = above[j]
                left = row[j - 1]
                row[j] = up if up >= left else left
    i, j = n, m
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            out[i - 1] = 1
            i -= 1
            j -= 1
        elif dp[i - 1][j] >= dp[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return bytes(out)
