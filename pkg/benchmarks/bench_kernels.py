#!/usr/bin/env python3
"""Times the numba kernels against the pure-numpy fallbacks.

Run directly: `python3 benchmarks/bench_kernels.py [--repeats N]`.
The first jitted call pays compilation; a warm-up call is excluded
from the timings.
"""

import argparse
import time

import numpy as np

from duplexkit import accel


def timed(fn, *args, repeats=5):
    fn(*args)  # warm-up (JIT compile / cache load)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_frame_rms(repeats):
    rng = np.random.default_rng(0)
    x = rng.normal(0, 0.2, 16000 * 600)  # 10 min of 16 kHz audio
    args = (x, 400, 160)
    return ("frame_rms (10 min audio)",
            timed(accel.frame_rms_numpy, *args, repeats=repeats),
            timed(accel.frame_rms, *args, repeats=repeats))


def bench_midpoint_states(repeats):
    rng = np.random.default_rng(1)
    starts = np.sort(rng.uniform(0, 3600, 600))
    ends = starts + rng.uniform(0.2, 4.0, 600)
    keep = np.ones(len(starts), dtype=bool)
    keep[1:] = starts[1:] > ends[:-1]
    starts, ends = starts[keep], ends[keep]
    mids = (np.arange(360_000) + 0.5) * 0.01  # 1 h at 10 ms hop
    args = (starts, ends, starts + 0.05, ends + 0.05, mids)
    return ("midpoint_states (1 h, 10 ms hop)",
            timed(accel.midpoint_states_numpy, *args, repeats=repeats),
            timed(accel.midpoint_states, *args, repeats=repeats))


def bench_segment_correlation(repeats):
    rng = np.random.default_rng(2)
    x = np.abs(rng.normal(1.0, 0.3, (4000, 15)))
    y = np.abs(x + rng.normal(0, 0.1, (4000, 15)))
    args = (x, y, 30, 6.62)
    return ("segment_correlation (4000 frames)",
            timed(accel.segment_correlation_mean_numpy, *args, repeats=repeats),
            timed(accel.segment_correlation_mean, *args, repeats=repeats))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if not accel.NUMBA_ENABLED:
        print("numba disabled (DUPLEXKIT_NO_NUMBA set): both columns run numpy")
    rows = [bench_frame_rms(args.repeats),
            bench_midpoint_states(args.repeats),
            bench_segment_correlation(args.repeats)]
    print(f"{'kernel':<36}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, t_np, t_nb in rows:
        print(f"{name:<36}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
