"""Hot numeric kernels: decayed occurrence mass and windowed co-occurrence pairs.

Both kernels ship in two equivalent implementations: a numba ``@njit`` version
(default) and a pure-numpy fallback. Selection happens once at import via the
``HYPER_KERNELS`` environment variable:

    HYPER_KERNELS=numpy   force the numpy path
    HYPER_KERNELS=numba   force numba (error if numba is missing)

Unset, numba is used when importable. ``benchmarks/bench_kernels.py`` compares
the two paths head to head.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("HYPER_KERNELS", "").strip().lower()
if _FLAG not in ("", "numba", "numpy"):
    raise ValueError(f"HYPER_KERNELS must be 'numba' or 'numpy', got {_FLAG!r}")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False
    if _FLAG == "numba":
        raise

USE_NUMBA = _HAVE_NUMBA and _FLAG != "numpy"


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Decayed occurrence mass: sum_j max(now - t_j, min_elapsed) ** (-d) per segment
# ---------------------------------------------------------------------------

def _decayed_mass_np(times: np.ndarray, offsets: np.ndarray, now: float,
                     d: float, min_elapsed: float) -> np.ndarray:
    n_seg = offsets.shape[0] - 1
    sums = np.zeros(n_seg, dtype=np.float64)
    if times.shape[0] == 0:
        return sums
    elapsed = np.maximum(now - times, min_elapsed)
    powed = elapsed ** (-d)
    lengths = np.diff(offsets)
    nonempty = lengths > 0
    starts = offsets[:-1][nonempty]
    if starts.shape[0]:
        # Zero-width segments collapse, so consecutive non-empty starts are
        # exact segment boundaries for reduceat.
        sums[nonempty] = np.add.reduceat(powed, starts)
    return sums


if _HAVE_NUMBA:

    @njit(cache=True)
    def _decayed_mass_nb(times, offsets, now, d, min_elapsed):  # pragma: no cover - jit
        n_seg = offsets.shape[0] - 1
        out = np.zeros(n_seg, dtype=np.float64)
        for s in range(n_seg):
            acc = 0.0
            for k in range(offsets[s], offsets[s + 1]):
                t = now - times[k]
                if t < min_elapsed:
                    t = min_elapsed
                acc += t ** (-d)
            out[s] = acc
        return out

else:  # pragma: no cover
    _decayed_mass_nb = None


def decayed_mass(times: np.ndarray, offsets: np.ndarray, now: float,
                 d: float, min_elapsed: float) -> np.ndarray:
    """Per-segment sum of power-law-decayed elapsed times.

    ``times`` is a flat float64 array of occurrence times; segment ``s`` spans
    ``times[offsets[s]:offsets[s+1]]``. Empty segments yield 0.0.
    """
    times = np.ascontiguousarray(times, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if USE_NUMBA:
        return _decayed_mass_nb(times, offsets, float(now), float(d), float(min_elapsed))
    return _decayed_mass_np(times, offsets, float(now), float(d), float(min_elapsed))


# ---------------------------------------------------------------------------
# Windowed co-occurrence pairs over integer-coded histories
# ---------------------------------------------------------------------------

def _pair_total(starts: np.ndarray, window: int) -> int:
    total = 0
    span = window - 1
    for s in range(starts.shape[0] - 1):
        length = int(starts[s + 1] - starts[s])
        if length - 1 >= span:
            total += (length - span) * span + span * (span - 1) // 2
        else:
            total += length * (length - 1) // 2
    return total


def _window_pair_codes_np(codes: np.ndarray, seq_ids: np.ndarray,
                          window: int, n_items: int) -> np.ndarray:
    chunks = []
    for delta in range(1, window):
        if delta >= codes.shape[0]:
            break
        a = codes[:-delta]
        b = codes[delta:]
        mask = seq_ids[:-delta] == seq_ids[delta:]
        lo = np.minimum(a[mask], b[mask])
        hi = np.maximum(a[mask], b[mask])
        chunks.append(lo * np.int64(n_items) + hi)
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)


if _HAVE_NUMBA:

    @njit(cache=True)
    def _window_pair_codes_nb(codes, starts, window, n_items, out):  # pragma: no cover - jit
        idx = 0
        for s in range(starts.shape[0] - 1):
            hi_bound = starts[s + 1]
            for p in range(starts[s], hi_bound):
                q_end = p + window
                if q_end > hi_bound:
                    q_end = hi_bound
                for q in range(p + 1, q_end):
                    a = codes[p]
                    b = codes[q]
                    if a <= b:
                        out[idx] = a * n_items + b
                    else:
                        out[idx] = b * n_items + a
                    idx += 1
        return idx

else:  # pragma: no cover
    _window_pair_codes_nb = None


def window_pair_counts(codes: np.ndarray, starts: np.ndarray, window: int,
                       n_items: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Count unordered within-window position pairs across segment boundaries.

    ``codes`` holds integer item codes for all histories concatenated;
    ``starts`` the segment boundaries (len = n_segments + 1). Two positions
    co-occur when they fall in the same segment at distance < ``window``.
    Returns (lo_codes, hi_codes, counts) sorted by encoded pair.
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if window <= 1 or codes.shape[0] == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, empty.copy()
    if USE_NUMBA:
        out = np.empty(_pair_total(starts, window), dtype=np.int64)
        n = _window_pair_codes_nb(codes, starts, window, n_items, out)
        enc = out[:n]
    else:
        seq_ids = np.repeat(
            np.arange(starts.shape[0] - 1, dtype=np.int64), np.diff(starts)
        )
        enc = _window_pair_codes_np(codes, seq_ids, window, n_items)
    if enc.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, empty.copy()
    uniq, counts = np.unique(enc, return_counts=True)
    return uniq // n_items, uniq % n_items, counts
