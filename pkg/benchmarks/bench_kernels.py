"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 200000]

Prints one line per kernel with the best-of-``repeat`` wall time for each
backend and the speedup. Results are checked for equality before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from lemur._ext import fallback

try:
    from lemur._ext import kernels as compiled
except ImportError:
    compiled = None


def workloads(n: int, rng: np.random.Generator) -> dict:
    table = np.unique(rng.integers(0, 4 * n, n))
    rows = np.arange(len(table), dtype=np.int64)
    ids = rng.integers(0, 4 * n, (n // 64, 64))  # history-shaped lookups
    scores = np.round(rng.normal(size=n), 3)
    labels = rng.integers(0, 2, n)
    groups = rng.integers(0, n // 8, n)
    return {
        "join_index": (ids, table, rows),
        "auc": (scores, labels),
        "grouped_auc": (groups, scores, labels),
    }


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    work = workloads(args.n, np.random.default_rng(args.seed))
    print(f"n={args.n} repeat={args.repeat}")
    print(f"{'kernel':<14}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, inputs in work.items():
        slow, fast = getattr(fallback, name), getattr(compiled, name)
        if not same(slow(*inputs), fast(*inputs)):
            raise SystemExit(f"{name}: backends disagree")
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat))
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
        print(f"{name:<14}{t_slow * 1e3:>14.2f}{t_fast * 1e3:>14.2f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
