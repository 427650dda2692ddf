import numpy as np
import pytest

from hyperrec import _kernels


def random_segments(rng, n_seg, max_len):
    lengths = rng.integers(0, max_len + 1, size=n_seg)
    offsets = np.zeros(n_seg + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(lengths)
    times = rng.integers(0, 1_000_000, size=int(offsets[-1])).astype(np.float64)
    return times, offsets


class TestDecayedMass:
    def test_single_segment_value(self):
        times = np.array([99.0, 96.0])
        offsets = np.array([0, 2], dtype=np.int64)
        out = _kernels.decayed_mass(times, offsets, 100.0, 0.5, 1.0)
        assert out[0] == pytest.approx(1.0 + 4.0 ** -0.5, abs=1e-12)

    def test_empty_segment_yields_zero(self):
        times = np.array([5.0])
        offsets = np.array([0, 0, 1, 1], dtype=np.int64)
        out = _kernels.decayed_mass(times, offsets, 10.0, 0.5, 1.0)
        assert out[0] == 0.0 and out[2] == 0.0
        assert out[1] == pytest.approx(5.0 ** -0.5)

    def test_clamp_floor(self):
        times = np.array([10.0, 20.0])  # one occurrence in the "future"
        offsets = np.array([0, 2], dtype=np.int64)
        out = _kernels.decayed_mass(times, offsets, 10.0, 0.5, 1.0)
        assert out[0] == pytest.approx(2.0, abs=1e-12)

    def test_no_occurrences_at_all(self):
        out = _kernels.decayed_mass(np.empty(0), np.array([0, 0], dtype=np.int64),
                                    10.0, 0.5, 1.0)
        assert out.tolist() == [0.0]

    @pytest.mark.skipif(not _kernels._HAVE_NUMBA, reason="numba unavailable")
    def test_backends_agree(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            times, offsets = random_segments(rng, int(rng.integers(1, 40)), 30)
            now = float(rng.integers(1_000_000, 2_000_000))
            d = float(rng.choice([0.1, 0.5, 1.5]))
            a = _kernels._decayed_mass_nb(times, offsets, now, d, 1.0)
            b = _kernels._decayed_mass_np(times, offsets, now, d, 1.0)
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


class TestWindowPairs:
    def naive_counts(self, codes, starts, window):
        counts = {}
        for s in range(len(starts) - 1):
            seg = codes[starts[s]:starts[s + 1]]
            for p in range(len(seg)):
                for q in range(p + 1, min(p + window, len(seg))):
                    key = (min(seg[p], seg[q]), max(seg[p], seg[q]))
                    counts[key] = counts.get(key, 0) + 1
        return counts

    def as_dict(self, result):
        lo, hi, counts = result
        return {(int(a), int(b)): int(c) for a, b, c in zip(lo, hi, counts)}

    def test_adjacent_window(self):
        codes = np.array([0, 1, 0, 1], dtype=np.int64)
        starts = np.array([0, 4], dtype=np.int64)
        got = self.as_dict(_kernels.window_pair_counts(codes, starts, 2, 2))
        assert got == {(0, 1): 3}

    def test_window_respects_boundaries(self):
        codes = np.array([0, 1, 1, 0], dtype=np.int64)
        starts = np.array([0, 2, 4], dtype=np.int64)
        got = self.as_dict(_kernels.window_pair_counts(codes, starts, 5, 2))
        assert got == {(0, 1): 2}

    def test_self_pairs_counted(self):
        codes = np.array([3, 3, 3], dtype=np.int64)
        starts = np.array([0, 3], dtype=np.int64)
        got = self.as_dict(_kernels.window_pair_counts(codes, starts, 3, 4))
        assert got == {(3, 3): 3}

    def test_window_one_yields_nothing(self):
        codes = np.array([0, 1], dtype=np.int64)
        starts = np.array([0, 2], dtype=np.int64)
        lo, hi, counts = _kernels.window_pair_counts(codes, starts, 1, 2)
        assert len(lo) == 0

    def test_matches_naive_on_random_data(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            n_seg = int(rng.integers(1, 8))
            lengths = rng.integers(0, 15, size=n_seg)
            starts = np.zeros(n_seg + 1, dtype=np.int64)
            starts[1:] = np.cumsum(lengths)
            codes = rng.integers(0, 6, size=int(starts[-1])).astype(np.int64)
            window = int(rng.integers(1, 7))
            got = self.as_dict(_kernels.window_pair_counts(codes, starts, window, 6))
            assert got == self.naive_counts(codes.tolist(), starts.tolist(), window)

    @pytest.mark.skipif(not _kernels._HAVE_NUMBA, reason="numba unavailable")
    def test_backends_agree(self):
        rng = np.random.default_rng(29)
        for _ in range(10):
            n_seg = int(rng.integers(1, 10))
            lengths = rng.integers(0, 25, size=n_seg)
            starts = np.zeros(n_seg + 1, dtype=np.int64)
            starts[1:] = np.cumsum(lengths)
            codes = rng.integers(0, 9, size=int(starts[-1])).astype(np.int64)
            window = int(rng.integers(2, 6))
            out = np.empty(_kernels._pair_total(starts, window), dtype=np.int64)
            n = _kernels._window_pair_codes_nb(codes, starts, window, 9, out)
            assert n == len(out)  # _pair_total is exact
            seq_ids = np.repeat(np.arange(n_seg, dtype=np.int64), np.diff(starts))
            enc_np = _kernels._window_pair_codes_np(codes, seq_ids, window, 9)
            assert np.array_equal(np.sort(out[:n]), np.sort(enc_np))
