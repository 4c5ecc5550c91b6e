#!/usr/bin/env python3
"""Benchmark the compiled collision kernels against the NumPy fallback.

Generates event sets at a realistic channel load and times both marking
kernels on each built backend, plus a full simulator run for context.

    python benchmarks/bench_kernels.py [--sizes 10000 100000 500000]
"""

import argparse
import time

import numpy as np

from lorascale import kernels
from lorascale.simulator import DeviceSpec, run


def make_events(n_events: int, load: float = 0.687, seed: int = 0):
    """Sorted start/end arrays resembling a busy single-SF channel."""
    rng = np.random.default_rng(seed)
    airtime = 0.11729
    # event density fixed by the load: n_events over the matching horizon
    horizon = n_events * airtime / load
    starts = np.sort(rng.uniform(0.0, horizon, n_events))
    return starts, starts + airtime


def best_of(fn, repeats: int = 5) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[10_000, 100_000, 500_000])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"built backends: {', '.join(backends)}")
    if len(backends) < 2:
        print("note: compiled backend missing, timing the fallback only")

    header = f"{'kernel':<14}{'events':>10}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for n in args.sizes:
        starts, ends = make_events(n)
        for name, call in (
            ("any-overlap", lambda: kernels.mark_any_overlap(starts, ends)),
            ("window(1.0)", lambda: kernels.mark_window(starts, ends, 1.0)),
        ):
            times = {}
            for backend in backends:
                kernels.use_backend(backend)
                times[backend] = best_of(call, args.repeats)
            row = f"{name:<14}{n:>10}" + "".join(
                f"{times[b] * 1e3:>10.2f}ms" for b in backends
            )
            if len(backends) == 2:
                row += f"{times['python'] / times['c']:>9.1f}x"
            print(row)

    # whole-run context: 41 devices for 10,000 periods
    fleet = [DeviceSpec(f"dev{i:03d}", f"{i + 1:016x}", 7, 7.0, 0.11729)
             for i in range(41)]
    print()
    for backend in backends:
        kernels.use_backend(backend)
        t = best_of(lambda: run(fleet, 70_000.0, seed=1), repeats=3)
        print(f"run(): 41 devices x 10,000 periods, {backend:>6} backend: {t * 1e3:7.1f} ms")


if __name__ == "__main__":
    main()
