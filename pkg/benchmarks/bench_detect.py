"""Benchmark the compiled detection kernel against the Python fallback.

Usage: python3 benchmarks/bench_detect.py [--days N] [--bars N]
"""

import argparse
import time

import numpy as np

from epsdd import _detect_py

try:
    from epsdd import _detect as _detect_c
except ImportError:
    _detect_c = None


def bench(fn, days, eps, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        total = 0
        for r in days:
            total += len(fn(r, eps))
        best = min(best, time.perf_counter() - t0)
    return best, total


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--days", type=int, default=2000)
    ap.add_argument("--bars", type=int, default=800)
    args = ap.parse_args()

    rng = np.random.Generator(np.random.Philox(key=[0, 0]))
    days = [rng.normal(0.0, 1e-3, args.bars) for _ in range(args.days)]
    eps = 1e-3

    t_py, n_py = bench(_detect_py.detect_segments, days, eps)
    print(f"python : {t_py:8.3f} s  ({n_py} events, {args.days} days x {args.bars} bars)")
    if _detect_c is None:
        print("cython : extension not built")
        return
    t_c, n_c = bench(_detect_c.detect_segments, days, eps)
    assert n_c == n_py, "backends disagree"
    print(f"cython : {t_c:8.3f} s  (speedup {t_py / t_c:5.1f}x)")


if __name__ == "__main__":
    main()
