#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Run after installing the package:

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 3]

Both backends share constants and operation order, so outputs must be
bit-identical; the benchmark asserts that before reporting speedups.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from maw.kernels import _pure

try:
    from maw.kernels import _fast
except ImportError:
    _fast = None


def _synth_points(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    # Clustered walk: long dwells with occasional 1 km jumps.
    lat = np.empty(n)
    lon = np.empty(n)
    base = np.array([47.6, -122.3])
    for i in range(n):
        if rng.random() < 0.002:
            base = base + rng.normal(0.0, 0.01, 2)
        lat[i] = base[0] + rng.normal(0.0, 1e-4)
        lon[i] = base[1] + rng.normal(0.0, 1e-4)
    ts = np.arange(n, dtype=np.int64) * 60
    return ts, lat, lon


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if _fast is None:
        raise SystemExit("compiled backend not available; build with "
                         "`pip install -e . --no-build-isolation`")

    ts, lat, lon = _synth_points(args.n)
    cases = [
        ("trace_segment_labels",
         lambda m: m.trace_segment_labels(ts, lat, lon, 0.2, 5.0)),
        ("incremental_pass",
         lambda m: m.incremental_pass(lat, lon, 0.2)),
    ]
    _, clat, clon = _pure.incremental_pass(lat, lon, 0.2)
    cases.append(("lloyd_refine",
                  lambda m: m.lloyd_refine(lat, lon, clat, clon)))

    print(f"n = {args.n} points, best of {args.repeat}")
    print(f"{'kernel':<24} {'pure (s)':>10} {'compiled (s)':>13} {'speedup':>9}")
    for name, call in cases:
        ref = call(_pure)
        got = call(_fast)
        ref = ref if isinstance(ref, tuple) else (ref,)
        got = got if isinstance(got, tuple) else (got,)
        for a, b in zip(ref, got):
            assert np.array_equal(np.asarray(a), np.asarray(b)), \
                f"{name}: backend outputs differ"
        t_pure = _time(lambda: call(_pure), args.repeat)
        t_fast = _time(lambda: call(_fast), args.repeat)
        print(f"{name:<24} {t_pure:>10.4f} {t_fast:>13.4f} "
              f"{t_pure / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
