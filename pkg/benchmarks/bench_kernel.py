"""Compare the compiled and pure-Python simulation kernels.

    python3 benchmarks/bench_kernel.py [--reps 100] [--T 6]

Both kernels consume the same replicate streams, so the final counts must
match exactly; the script checks that before reporting timings.
"""
import argparse
import time

import numpy as np

from bmplln import _backend
from bmplln.model import bundled_model
from bmplln.simulator import build_tables, replicate_stream


def run(kernel, model, T, reps, seed=0):
    tables = build_tables(model)
    counts = []
    start = time.perf_counter()
    for r in range(reps):
        c, _, _ = kernel(replicate_stream(seed, r), tables, 0, T, 10**7)
        counts.append(c)
    return time.perf_counter() - start, np.array(counts)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=100)
    parser.add_argument("--T", type=float, default=6.0)
    args = parser.parse_args()
    if "cython" not in _backend.KERNELS:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")
    print(f"{'model':<10} {'kernel':<7} {'seconds':>9} {'ns/particle':>12} {'speedup':>8}")
    for name in ("yule", "two_state"):
        model = bundled_model(name)
        results = {k: run(_backend.KERNELS[k], model, args.T, args.reps) for k in ("python", "cython")}
        if not np.array_equal(results["python"][1], results["cython"][1]):
            raise SystemExit(f"{name}: kernels disagree")
        # normalized by final population; the event count scales with it
        particles = results["cython"][1].sum()
        for k, (secs, _) in results.items():
            speedup = results["python"][0] / secs
            print(f"{name:<10} {k:<7} {secs:9.3f} {1e9 * secs / particles:12.1f} {speedup:7.1f}x")


if __name__ == "__main__":
    main()
