#!/usr/bin/env python3
"""Benchmark the MILP solver on tracking instances and random models.

Reports per-instance solve times and branch-and-bound statistics for the
robot-maze tracking problem at random measurements, plus throughput on
random small MILPs.
"""

import argparse
import sys
import time

import numpy as np

from milp_safeguard.encoder import TrackingProblem, solve_tracking
from milp_safeguard.milp import LE, GE, EQ, ModelBuilder, solve
from milp_safeguard.nn_model import build_identity_sum_network
from milp_safeguard.sets import Hypercube, UnsafeRegion


def tracking_bench(n: int, seed: int):
    X = Hypercube(np.array([-1.0, -1.0]), np.array([10.0, 10.0]))
    U = Hypercube(np.array([-0.25, -0.25]), np.array([0.25, 0.25]))
    eps = np.array([0.05, 0.05])
    net = build_identity_sum_network(X, U)
    block = Hypercube(np.array([4.0, 4.0]), np.array([5.0, 5.0]))
    rng = np.random.default_rng(seed)
    times = []
    for _ in range(n):
        y = rng.uniform(0.5, 8.5, size=2)
        if block.contains(y):
            continue
        x_ref = np.clip(y + rng.uniform(-0.3, 0.3, size=2), X.lo, X.hi)
        if block.contains(x_ref):
            continue
        p = TrackingProblem(net=net, X=X, U=U, unsafe=UnsafeRegion((block,)),
                            eps_x=eps, eps_y=eps, eps_u=eps, y_k=y,
                            x_ref=x_ref)
        t0 = time.perf_counter()
        try:
            solve_tracking(p)
        except RuntimeError:
            continue
        times.append(1e3 * (time.perf_counter() - t0))
    arr = np.array(times)
    print(f"tracking: {len(arr)} solves, median {np.median(arr):.1f} ms, "
          f"p90 {np.percentile(arr, 90):.1f} ms, max {arr.max():.1f} ms")


def random_milp_bench(n: int, seed: int):
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    solved = 0
    for _ in range(n):
        b = ModelBuilder()
        xs = [b.add_continuous(-3.0, 3.0) for _ in range(3)]
        ds = [b.add_binary() for _ in range(6)]
        allv = xs + ds
        for _ in range(4):
            idx = rng.choice(len(allv), size=3, replace=False)
            rel = (LE, GE, EQ)[int(rng.integers(0, 3))]
            b.add_constraint(
                {allv[i]: float(rng.uniform(-2, 2)) for i in idx},
                rel, float(rng.uniform(-3, 3)))
        b.set_objective({v: float(rng.uniform(-1, 1)) for v in allv})
        solve(b.build())
        solved += 1
    dt = time.perf_counter() - t0
    print(f"random MILPs: {solved} in {dt:.2f} s "
          f"({1e3 * dt / solved:.2f} ms each)")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tracking", type=int, default=50)
    ap.add_argument("--random", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    tracking_bench(args.tracking, args.seed)
    random_milp_bench(args.random, args.seed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
