"""Time the compiled kernels against the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--grid G] [--stages N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from microgrid_opt.kernels import _pure

try:
    from microgrid_opt.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def instance(g: int, n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    grid = np.linspace(1.25, 11.25, g)
    trade = rng.normal(0, 50, (n, g, g))
    far = np.abs(grid[None, :] - grid[:, None]) > 0.4 * (grid[-1] - grid[0])
    trade[:, far] = np.inf
    rank = np.argsort(np.argsort(np.abs(grid[None, :] - grid[:, None]), axis=1), axis=1).astype(np.int64)
    return grid, trade, rank


def best_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--grid", type=int, default=41)
    ap.add_argument("--stages", type=int, default=24)
    args = ap.parse_args(argv)
    grid, trade, rank = instance(args.grid, args.stages)
    cases = {
        "lattice_dp": lambda m: m.lattice_dp(trade, rank),
        "sigma_dp": lambda m: m.sigma_dp(grid, trade, rank, 30.0, 1.1, 12.5),
        "exact_cycle_dp": lambda m: m.exact_cycle_dp(grid, trade, rank, 30.0, 1.1, 12.5),
    }
    print(f"grid={args.grid} stages={args.stages} repeats={args.repeats}")
    print(f"{'kernel':<16}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, call in cases.items():
        tp = best_time(lambda: call(_pure), args.repeats)
        if _ckernels is None:
            print(f"{name:<16}{tp:>12.4f}{'n/a':>12}{'n/a':>10}")
            continue
        tc = best_time(lambda: call(_ckernels), args.repeats)
        print(f"{name:<16}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
