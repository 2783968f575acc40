#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure numpy fallback.

Times the Heisenberg distance oracle and the batched control-trajectory
propagation (forward and with the adjoint sweep), and reports the largest
cross-backend deviation.

    python3 benchmarks/bench_kernels.py [--samples 1000000] [--batch 512]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from carnotlab.frames import builtin_frame
from carnotlab.kernels import pure

try:
    from carnotlab.kernels import _compiled as compiled
except ImportError:
    compiled = None


def timeit(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--segments", type=int, default=64)
    args = ap.parse_args()

    if compiled is None:
        print("compiled kernels unavailable; showing pure timings only")

    rng = np.random.default_rng(0)
    pts = rng.normal(size=(args.samples, 3)) * np.array([1.0, 1.0, 2.0])

    print(f"heisenberg_distance on {args.samples:,} points")
    t_pure, d_pure = timeit(lambda: pure.heisenberg_distance(pts))
    print(f"  pure:     {t_pure * 1e3:9.1f} ms")
    if compiled is not None:
        t_c, d_c = timeit(lambda: compiled.heisenberg_distance(pts))
        dev = np.abs(d_pure - d_c).max()
        print(f"  compiled: {t_c * 1e3:9.1f} ms   speedup x{t_pure / t_c:.1f}   max dev {dev:.2e}")

    frame = builtin_frame("heisenberg1")
    table = frame.term_table
    x0 = rng.normal(size=(args.batch, 3)) * 0.3
    controls = rng.normal(size=(args.batch, args.segments, 2))
    dt = 1.0 / args.segments
    bar = rng.normal(size=(args.batch, 3))

    print(f"propagate on a ({args.batch}, {args.segments}, 2) control batch")
    t_pure, e_pure = timeit(lambda: pure.propagate(*table, x0, controls, dt))
    print(f"  pure:     {t_pure * 1e3:9.1f} ms")
    if compiled is not None:
        t_c, e_c = timeit(lambda: compiled.propagate(*table, x0, controls, dt))
        dev = np.abs(e_pure - e_c).max()
        print(f"  compiled: {t_c * 1e3:9.1f} ms   speedup x{t_pure / t_c:.1f}   max dev {dev:.2e}")

    print("propagate_with_grad on the same batch")
    t_pure, (_, g_pure) = timeit(lambda: pure.propagate_with_grad(*table, x0, controls, dt, bar))
    print(f"  pure:     {t_pure * 1e3:9.1f} ms")
    if compiled is not None:
        t_c, (_, g_c) = timeit(lambda: compiled.propagate_with_grad(*table, x0, controls, dt, bar))
        dev = np.abs(g_pure - g_c).max()
        print(f"  compiled: {t_c * 1e3:9.1f} ms   speedup x{t_pure / t_c:.1f}   max dev {dev:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
