"""Compiled vs numpy TT kernels, plus the surrogate-vs-oracle per-call speedup.

    python benchmarks/bench_kernels.py [--n 100000] [--reps 2000]
"""

import argparse
import time

import numpy as np

from ltts import _fallback
from ltts.quantum import QcnnModel
from ltts.tt import random_tt, tt_eval

try:
    from ltts import _kernels
except ImportError:
    _kernels = None


def best_of(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def per_call(fn, items):
    t0 = time.perf_counter()
    for x in items:
        fn(x)
    return (time.perf_counter() - t0) / len(items)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--reps", type=int, default=2000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'N':>3} {'m':>3} {'chi':>4} {'python [s]':>12} {'cython [s]':>12} {'ratio':>8}")
    for N, m, chi in [(6, 3, 2), (6, 3, 5), (8, 4, 8), (10, 3, 16)]:
        tt = random_tt(N, m, chi, rng)
        flat, offsets, ranks = tt._packed
        X = rng.uniform(-1, 1, size=(args.n, N))
        t_py = best_of(_fallback.tt_eval_batch, flat, offsets, ranks, m, X)
        if _kernels is None:
            print(f"{N:>3} {m:>3} {chi:>4} {t_py:>12.4f} {'n/a':>12}")
            continue
        t_cy = best_of(_kernels.tt_eval_batch, flat, offsets, ranks, m, X)
        print(f"{N:>3} {m:>3} {chi:>4} {t_py:>12.4f} {t_cy:>12.4f} {t_py / t_cy:>8.1f}")

    model = QcnnModel()
    tt = random_tt(6, 3, 5, rng)
    X = rng.uniform(0, np.pi, size=(args.reps, 6))
    XI = rng.uniform(-1, 1, size=(args.reps, 6))
    t_oracle = per_call(model.evaluate, X)
    t_tt = per_call(lambda xi: tt_eval(tt, xi), XI)
    print(f"\nsingle call: oracle {t_oracle * 1e6:.1f} us, surrogate {t_tt * 1e6:.2f} us, "
          f"speedup {t_oracle / t_tt:.0f}x")


if __name__ == "__main__":
    main()
