"""Timing comparison of the compiled and pure-NumPy kernel backends.

Usage: python benches/bench_backends.py [--grid N] [--samples N] [--repeat N]

Exercises the three hot paths of a study iteration (series accumulation over
the grid, posterior summary, and the per-candidate hypothetical-entropy
pair) at study-scale sizes and prints a table with the speedup.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from fatiguelab._backend import load_backend


def _timeit(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grid", type=int, default=100_000)
    parser.add_argument("--samples", type=int, default=10_000)
    parser.add_argument("--records", type=int, default=30)
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args()

    backends = {"python": load_backend("python")}
    try:
        backends["compiled"] = load_backend("compiled")
    except ImportError:
        print("compiled extension not available; timing the python backend only")

    rng = np.random.default_rng(0)
    m = np.linspace(2.40, 2.80, args.grid)
    w = np.full(args.grid, m[1] - m[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    lp = -0.5 * ((m - 2.602) / 0.02) ** 2
    loads = np.log10(rng.uniform(330.0, 480.0, size=args.records))
    mask = rng.integers(0, 2, size=args.records).astype(np.uint8)

    mass = np.exp(lp) * w
    pmf = mass / mass.sum()
    idx = np.sort(rng.choice(args.grid, size=args.samples, p=pmf))
    uniq, cnt = np.unique(idx, return_counts=True)
    uniq = uniq.astype(np.int64)
    cnt = cnt.astype(np.float64)

    cases = {
        "accumulate_series": lambda k: k.accumulate_series(m, loads, mask, 0.03),
        "posterior_summary": lambda k: k.posterior_summary(m, lp, w),
        "entropy_pair_mc": lambda k: k.entropy_pair_mc(
            m, lp, w, uniq, cnt, math.log10(405.0), 0.03, 0
        ),
        "entropy_exact": lambda k: k.entropy_exact(m, lp, w),
    }

    print(
        f"grid={args.grid} samples={args.samples} records={args.records} "
        f"(best of {args.repeat})"
    )
    header = f"{'kernel':20s}" + "".join(f"{name:>14s}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for name, call in cases.items():
        times = {bk: _timeit(lambda k=kern: call(k), args.repeat) for bk, kern in backends.items()}
        row = f"{name:20s}" + "".join(f"{times[bk] * 1e3:11.3f} ms" for bk in backends)
        if len(times) == 2:
            row += f"{times['python'] / times['compiled']:9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
