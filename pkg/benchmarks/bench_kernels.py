#!/usr/bin/env python3
"""Benchmark the compiled alignment kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--sizes 100,400,1600] [--repeat 3]
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from apofasis._kernels import BACKEND, pure

try:
    from apofasis._kernels import _native as native
except ImportError:
    native = None


def make_pair(rng: random.Random, n: int, vocab: int = 200):
    a = np.asarray([rng.randrange(vocab) for _ in range(n)], dtype=np.int32)
    b = np.asarray([rng.randrange(vocab) for _ in range(n)], dtype=np.int32)
    return a, b


def time_fn(fn, pairs, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        for a, b in pairs:
            fn(a, b)
        best = min(best, time.perf_counter() - started)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="100,400,1600")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--pairs", type=int, default=5)
    args = parser.parse_args()

    rng = random.Random(0)
    print(f"active backend at import: {BACKEND}")
    if native is None:
        print("compiled extension not available; benchmarking pure only")

    header = f"{'kernel':<12} {'n words':>8} {'pure (s)':>10}"
    if native is not None:
        header += f" {'cython (s)':>11} {'speedup':>8}"
    print(header)
    for size in [int(s) for s in args.sizes.split(",")]:
        pairs = [make_pair(rng, size) for _ in range(args.pairs)]
        for name, pure_fn, native_fn in (
            ("levenshtein", pure.levenshtein, getattr(native, "levenshtein", None)),
            ("lcs_flags", pure.lcs_flags, getattr(native, "lcs_flags", None)),
        ):
            pure_time = time_fn(pure_fn, pairs, args.repeat)
            row = f"{name:<12} {size:>8} {pure_time:>10.4f}"
            if native_fn is not None:
                native_time = time_fn(native_fn, pairs, args.repeat)
                row += f" {native_time:>11.4f} {pure_time / native_time:>7.1f}x"
            print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
