"""Time the simulator and greedy kernels under both backends.

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 20]

The numba column is skipped when numba is unavailable or disabled with
VIEWSIM_DISABLE_NUMBA=1.  Both backends must agree exactly on every input.
"""

import argparse
import timeit

import numpy as np

from viewsim import kernels
from viewsim.envmodel import threshold_grid


def make_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    pred = rng.random(n)
    bid = rng.integers(0, 5000, n)
    cost = rng.integers(0, 5000, n)
    viewed = rng.random(n) < pred
    return pred, bid, cost, viewed


def bench(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    stats_args = (*make_inputs(args.n), 0.4)
    grid = threshold_grid(1001)
    greedy_args = (0.2, -1.0, 0.75, 0.204, 2.0, grid)

    cases = [
        ("interval_stats", kernels.interval_stats_numpy, getattr(kernels, "_interval_stats_jit", None), stats_args),
        ("greedy_grid_argmax", kernels.greedy_grid_argmax_numpy, getattr(kernels, "_greedy_grid_jit", None), greedy_args),
    ]
    print(f"backend in use: {kernels.BACKEND}")
    print(f"{'kernel':<20} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for name, np_fn, jit_fn, fn_args in cases:
        t_np = bench(np_fn, fn_args, args.repeat)
        if jit_fn is None:
            print(f"{name:<20} {t_np * 1e3:12.3f} {'-':>12} {'-':>9}")
            continue
        a, b = np_fn(*fn_args), jit_fn(*fn_args)
        if tuple(np.atleast_1d(a)) != tuple(int(x) for x in np.atleast_1d(b)):
            raise SystemExit(f"{name}: backends disagree ({a} vs {b})")
        t_jit = bench(jit_fn, fn_args, args.repeat)
        print(f"{name:<20} {t_np * 1e3:12.3f} {t_jit * 1e3:12.3f} {t_np / t_jit:8.1f}x")


if __name__ == "__main__":
    main()
