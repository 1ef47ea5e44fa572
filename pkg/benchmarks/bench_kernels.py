"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--size S]
"""
import argparse
import timeit

import numpy as np

from pgvba import kernels


def cases(size):
    rng = np.random.default_rng(0)
    lam = rng.uniform(0, 60, (size, size))
    hx = rng.uniform(0, 20, size * size)
    y = hx + rng.normal(0, 3, hx.size)
    ref = rng.uniform(0, 10, (size, size))
    return {
        "poisson": lambda b: kernels.poisson(lam, np.random.default_rng(1), backend=b),
        "pg_nll": lambda b: kernels.pg_nll(hx, y, 2.0, backend=b),
        "nltv_weights": lambda b: kernels.nltv_weights(ref, 1.0, backend=b),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--size", type=int, default=64, help="image side length")
    args = parser.parse_args()
    backends = sorted(kernels.BACKENDS)
    print(f"image {args.size}x{args.size}, best of {args.repeat}")
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases(args.size).items():
        times = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends}
        row = f"{name:<14}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:>11.1f}x"
        print(row)
    if len(backends) == 1:
        print("compiled backend not built; only the fallback was timed")


if __name__ == "__main__":
    main()
