#!/usr/bin/env python3
"""Compare the compiled and pure-NumPy basis-pursuit backends.

Times repeated solves on dictionary/instance sizes matching the Monte Carlo
sweeps, checks that both backends agree on the optimum, and prints the
speedup table.  Run from anywhere:

    python benchmarks/bench_lp.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from orthocs.lp import available_backends, solve_bp
from orthocs.sensing import build_dictionary

SIZES = [(2, 8), (2, 16), (2, 25), (5, 13), (5, 21), (5, 30), (8, 24)]


def make_instances(T, M, count, rng):
    instances = []
    for i in range(count):
        d = build_dictionary("concat_orthogonal", T, M, int(rng.integers(2 ** 62)))
        n = T * M
        x0 = np.zeros(n)
        k = max(1, int(0.15 * n))
        x0[rng.choice(n, k, replace=False)] = rng.standard_normal(k)
        instances.append((d.matrix, d.matrix @ x0))
    return instances


def bench(backend, instances, repeats):
    t0 = time.perf_counter()
    iters = 0
    for _ in range(repeats):
        for mat, y in instances:
            sol = solve_bp(mat, y, backend=backend)
            iters += sol.iterations
    per_solve = (time.perf_counter() - t0) / (repeats * len(instances))
    return per_solve, iters / (repeats * len(instances))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=40)
    parser.add_argument("--instances", type=int, default=25)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    header = f"{'T':>3} {'M':>4} {'N':>5} |"
    for be in backends:
        header += f" {be + ' ms':>12} {'iters':>6} |"
    if len(backends) == 2:
        header += f" {'speedup':>8}"
    print(header)

    rng = np.random.default_rng(12345)
    for T, M in SIZES:
        instances = make_instances(T, M, args.instances, rng)
        # agreement spot check before timing
        ref = None
        for be in backends:
            sol = solve_bp(instances[0][0], instances[0][1], backend=be)
            assert sol.status == "optimal", (T, M, be)
            if ref is None:
                ref = sol.l1_value
            else:
                assert abs(sol.l1_value - ref) < 1e-7, (T, M, be)
        line = f"{T:>3} {M:>4} {T * M:>5} |"
        times = []
        for be in backends:
            per, iters = bench(be, instances, args.repeats)
            times.append(per)
            line += f" {per * 1e3:>12.3f} {iters:>6.1f} |"
        if len(times) == 2:
            line += f" {times[1] / times[0]:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
