#!/usr/bin/env python3
"""Time the numba and numpy enumeration kernels on identical workloads.

Usage: python benchmarks/compare_kernels.py [--instances N] [--seed S]

Both paths must produce bitwise-identical cost components; this script checks
that while timing full-grid evaluations (59,049 schedules x 5 periods each).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from clauseplan.bench import generate_instances
from clauseplan.kernels import (
    HAS_NUMBA,
    build_schedules,
    schedule_components,
)


def time_impl(impl: str, instances, schedules) -> float:
    start = time.perf_counter()
    for inst in instances:
        demand = np.asarray(inst.demand, dtype=np.int64)
        schedule_components(schedules, demand, inst.lead_ext, impl=impl)
        schedule_components(schedules, demand, inst.lead_true, impl=impl)
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--instances", type=int, default=100)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    schedules = build_schedules(5)
    instances = generate_instances(args.instances, args.seed)
    evals = 2 * args.instances * schedules.shape[0]

    impls = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if HAS_NUMBA:
        # trigger JIT compilation outside the timed region
        schedule_components(schedules[:8], np.asarray(instances[0].demand,
                                                      dtype=np.int64),
                            1, impl="numba")

    print(f"{evals:,} schedule evaluations per implementation "
          f"({args.instances} instances x 2 enumerations x "
          f"{schedules.shape[0]:,} schedules)\n")
    timings = {}
    for impl in impls:
        timings[impl] = time_impl(impl, instances, schedules)
        rate = evals / timings[impl] / 1e6
        print(f"{impl:>6}: {timings[impl]:7.3f} s   ({rate:6.1f} M schedules/s)")

    if HAS_NUMBA:
        speedup = timings["numpy"] / timings["numba"]
        print(f"\nnumba speedup over numpy: {speedup:.2f}x")
        demand = np.asarray(instances[0].demand, dtype=np.int64)
        a = schedule_components(schedules, demand, 2, impl="numpy")
        b = schedule_components(schedules, demand, 2, impl="numba")
        identical = all(np.array_equal(x, y) for x, y in zip(a, b))
        print(f"bitwise-identical components: {identical}")
    else:
        print("\nnumba not installed; only the numpy path was timed")


if __name__ == "__main__":
    main()
