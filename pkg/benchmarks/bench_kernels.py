"""Time the compiled and numpy kernel backends on the shapes training uses.

    python benchmarks/bench_kernels.py [--rows 2048] [--repeat 5] [--orders 3,5,7]

Prints one row per (kernel, order) with the best-of-``repeat`` time of each
backend and the speedup. Both backends get identical inputs.
"""

import argparse
import sys
import timeit

import numpy as np

from anovanet import kernels


def _inputs(k, n, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, k + 1))
    a = rng.normal(size=(n, 1 << k))
    g = rng.normal(size=(n, 1 << k))
    return d, a, g


def _cases(mod, k, n):
    d, a, g = _inputs(k, n)
    return {
        "lift_forward": lambda: mod.lift_forward(d, a),
        "lift_backward": lambda: mod.lift_backward(d, a, g),
        "subset_mul": lambda: mod.subset_mul(a, g),
    }


def best_time(fn, repeat):
    fn()  # warm caches and any lazy allocation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2048, help="jets per call (batch x width)")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--orders", default="3,5,7")
    args = ap.parse_args(argv)
    found = kernels.backends()
    if "cython" not in found:
        print("compiled backend not importable; build with `pip install -e . --no-build-isolation`",
              file=sys.stderr)
        return 1
    orders = [int(v) for v in args.orders.split(",")]
    print(f"rows={args.rows} repeat={args.repeat} selected backend={kernels.BACKEND}")
    print(f"{'kernel':<14} {'k':>2} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for k in orders:
        py = _cases(found["python"], k, args.rows)
        cy = _cases(found["cython"], k, args.rows)
        for name in py:
            ref, got = py[name](), cy[name]()
            ref, got = (ref, got) if isinstance(ref, tuple) else ((ref,), (got,))
            for r, c in zip(ref, got):
                assert np.allclose(r, c, rtol=1e-10, atol=1e-10), f"{name} k={k}: backends disagree"
            tp = best_time(py[name], args.repeat)
            tc = best_time(cy[name], args.repeat)
            print(f"{name:<14} {k:>2} {1e3 * tp:>12.3f} {1e3 * tc:>12.3f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
