"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel: best wall time for each backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from ledgermetrics import _pure

try:
    from ledgermetrics import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    n = 200_000
    a = rng.integers(0, n, n).astype(np.int64)
    b = rng.integers(0, n, n).astype(np.int64)
    codes = rng.integers(0, 50, 1_000_000).astype(np.int64)
    asc = np.sort(rng.pareto(1.5, 1_000_000))
    desc = asc[::-1].copy()
    m = rng.normal(size=(40, 40))
    sym = np.ascontiguousarray((m + m.T) / 2)
    tol = 1e-12 * np.abs(sym).max()
    return {
        "uf_roots (200k nodes)": lambda k: k.uf_roots(n, a, b),
        "window_counts (1M blocks)": lambda k: k.window_counts(codes, 0, len(codes), 50),
        "gini_sorted (1M)": lambda k: k.gini_sorted(asc),
        "prefix_count (1M)": lambda k: k.prefix_count(desc, desc.sum() / 2),
        "jacobi_eigen (40x40)": lambda k: k.jacobi_eigen(sym.copy(), tol, 100),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'python':>10s} {'cython':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_pure), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:28s} {t_py:10.4f} {'n/a':>10s}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        print(f"{name:28s} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
