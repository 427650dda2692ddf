"""Benchmark the numba kernels against the pure-numpy fallback.

Runs both implementations of each kernel on identical synthetic data and
prints timings plus speedup. The numba path is exercised directly (not via
the HYPER_KERNELS flag), so one process covers both backends.

Usage: python benchmarks/bench_kernels.py [--users 2000] [--events 200] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hyperrec import _kernels


def make_occurrence_data(rng, n_segments, max_len):
    lengths = rng.integers(1, max_len + 1, size=n_segments)
    offsets = np.zeros(n_segments + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(lengths)
    times = rng.integers(0, 10_000_000, size=int(offsets[-1])).astype(np.float64)
    return times, offsets


def make_history_data(rng, n_users, events_per_user, n_items):
    codes = rng.integers(0, n_items, size=n_users * events_per_user).astype(np.int64)
    starts = np.arange(0, n_users * events_per_user + 1, events_per_user, dtype=np.int64)
    return codes, starts


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, default=2000)
    parser.add_argument("--events", type=int, default=200, help="events per user")
    parser.add_argument("--items", type=int, default=500)
    parser.add_argument("--window", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(7)
    now = 10_000_001.0

    times, offsets = make_occurrence_data(rng, args.users * 20, args.events // 4 + 1)
    codes, starts = make_history_data(rng, args.users, args.events, args.items)

    # Warm up the JIT before timing.
    _kernels._decayed_mass_nb(times[:16], np.array([0, 8, 16], dtype=np.int64),
                              now, 0.5, 1.0)
    warm_out = np.empty(_kernels._pair_total(starts[:3], args.window), dtype=np.int64)
    _kernels._window_pair_codes_nb(codes[: starts[2]], starts[:3], args.window,
                                   args.items, warm_out)

    print(f"decayed_mass: {len(times)} occurrences in {len(offsets) - 1} segments")
    t_nb = timeit(lambda: _kernels._decayed_mass_nb(times, offsets, now, 0.5, 1.0),
                  args.repeats)
    t_np = timeit(lambda: _kernels._decayed_mass_np(times, offsets, now, 0.5, 1.0),
                  args.repeats)
    print(f"  numba {t_nb * 1e3:8.2f} ms   numpy {t_np * 1e3:8.2f} ms   "
          f"speedup {t_np / t_nb:.2f}x")

    a = _kernels._decayed_mass_nb(times, offsets, now, 0.5, 1.0)
    b = _kernels._decayed_mass_np(times, offsets, now, 0.5, 1.0)
    assert np.allclose(a, b, rtol=0, atol=1e-9), "backend mismatch"

    print(f"window_pair_codes: {len(codes)} events, window {args.window}")
    out = np.empty(_kernels._pair_total(starts, args.window), dtype=np.int64)
    seq_ids = np.repeat(np.arange(len(starts) - 1, dtype=np.int64), np.diff(starts))
    t_nb = timeit(
        lambda: _kernels._window_pair_codes_nb(codes, starts, args.window,
                                               args.items, out),
        args.repeats,
    )
    t_np = timeit(
        lambda: _kernels._window_pair_codes_np(codes, seq_ids, args.window, args.items),
        args.repeats,
    )
    print(f"  numba {t_nb * 1e3:8.2f} ms   numpy {t_np * 1e3:8.2f} ms   "
          f"speedup {t_np / t_nb:.2f}x")

    n = _kernels._window_pair_codes_nb(codes, starts, args.window, args.items, out)
    enc_np = _kernels._window_pair_codes_np(codes, seq_ids, args.window, args.items)
    assert np.array_equal(np.sort(out[:n]), np.sort(enc_np)), "backend mismatch"
    print("backends agree on both kernels")


if __name__ == "__main__":
    main()
