"""Alignment kernels with a compiled fast path.

The Cython extension is preferred; the pure-Python implementation is a
drop-in fallback (identical outputs, including backtrace tie-breaking).
Set APOFASIS_PURE_KERNELS=1 to force the fallback, e.g. for benchmarking.
"""

from __future__ import annotations

import os

import numpy as np

from apofasis._kernels import pure

if os.environ.get("APOFASIS_PURE_KERNELS") == "1":
    _backend = pure
    BACKEND = "pure"
else:
    try:
        from apofasis._kernels import _native as _backend  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        _backend = pure
        BACKEND = "pure"


def _intern(a_words, b_words):
    ids: dict[str, int] = {}
    a_ids = np.empty(len(a_words), dtype=np.int32)
    b_ids = np.empty(len(b_words), dtype=np.int32)
    for i, w in enumerate(a_words):
        a_ids[i] = ids.setdefault(w, len(ids))
    for i, w in enumerate(b_words):
        b_ids[i] = ids.setdefault(w, len(ids))
    return a_ids, b_ids


def levenshtein_words(a_words, b_words) -> int:
    """Word-level edit distance (insert/delete/substitute, unit cost)."""
    a_ids, b_ids = _intern(a_words, b_words)
    return _backend.levenshtein(a_ids, b_ids)


def lcs_member_flags(a_words, b_words) -> bytes:
    """Byte flags marking which words of `a_words` sit on an LCS with `b_words`."""
    a_ids, b_ids = _intern(a_words, b_words)
    return _backend.lcs_flags(a_ids, b_ids)
