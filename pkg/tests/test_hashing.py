import numpy as np
import pytest

import metaspec as ms
from metaspec.hashing import (
    HashError,
    SegmentBuffer,
    fingerprint,
    hamming,
    pack_fingerprint,
    resize_mean,
    select_frame,
    unpack_fingerprint,
)

from conftest import random_pair


class TestResizeMean:
    def test_constant_input(self):
        out = resize_mean(np.full((4, 4), 7.0), 2, 2)
        np.testing.assert_array_equal(out, np.full((2, 2), 7.0))

    def test_global_mean(self):
        out = resize_mean(np.array([[1.0, 2.0], [3.0, 4.0]]), 1, 1)
        assert out[0, 0] == pytest.approx(2.5)

    def test_identity_resize(self):
        m = np.arange(12.0).reshape(3, 4)
        np.testing.assert_array_equal(resize_mean(m, 3, 4), m)

    def test_blocks_partition_the_input(self):
        # weighted mean of the block means reproduces the global mean even
        # for non-divisible shapes
        rng = np.random.default_rng(0)
        m = rng.normal(size=(13, 7))
        out = resize_mean(m, 5, 3)
        row_edges = np.round(np.linspace(0, 13, 6)).astype(int)
        col_edges = np.round(np.linspace(0, 7, 4)).astype(int)
        counts = np.outer(np.diff(row_edges), np.diff(col_edges))
        assert (out * counts).sum() == pytest.approx(m.sum())

    def test_rejects_upsampling(self):
        with pytest.raises(HashError):
            resize_mean(np.ones((4, 4)), 5, 2)


class TestFingerprint:
    def test_constant_channels_give_all_threes(self):
        pair = ms.SpectrumPair(np.full((8, 8), 2.0), np.full((8, 8), -1.0))
        fp = fingerprint(pair, 4, 4)
        np.testing.assert_array_equal(fp.values, np.full((4, 4), 3))

    def test_half_split_phase(self):
        amp = np.full((2, 2), 1.0)
        phase = np.array([[1.0, 1.0], [-1.0, -1.0]])  # top row above mean
        fp = fingerprint(ms.SpectrumPair(amp, phase), 2, 2)
        np.testing.assert_array_equal(fp.values, np.array([[3, 3], [2, 2]]))

    def test_alphabet(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            fp = fingerprint(random_pair(rng), 4, 3)
            assert set(np.unique(fp.values)) <= {0, 1, 2, 3}

    def test_amplitude_scale_invariance(self):
        rng = np.random.default_rng(2)
        pair = random_pair(rng)
        for c in (0.01, 3.0, 1e4):
            scaled = ms.SpectrumPair(c * pair.amplitude, pair.phase)
            np.testing.assert_array_equal(
                fingerprint(scaled, 4, 3).values, fingerprint(pair, 4, 3).values
            )


class TestHamming:
    def test_metric_properties(self):
        rng = np.random.default_rng(3)
        prints = [
            ms.HashFingerprint(rng.integers(0, 4, (5, 4)).astype(np.uint8)) for _ in range(6)
        ]
        for a in prints:
            assert hamming(a, a) == 0
            for b in prints:
                assert hamming(a, b) == hamming(b, a) >= 0
                assert (hamming(a, b) == 0) == np.array_equal(a.values, b.values)
                for c in prints:
                    assert hamming(a, c) <= hamming(a, b) + hamming(b, c)

    def test_single_cell_difference(self):
        a = ms.HashFingerprint(np.zeros((3, 3), dtype=np.uint8))
        v = a.values.copy()
        v[1, 2] = 2
        assert hamming(a, ms.HashFingerprint(v)) == 1

    def test_opposite_fingerprints(self):
        a = ms.HashFingerprint(np.zeros((8, 8), dtype=np.uint8))
        b = ms.HashFingerprint(np.full((8, 8), 3, dtype=np.uint8))
        assert hamming(a, b) == 64

    def test_shape_mismatch(self):
        a = ms.HashFingerprint(np.zeros((2, 2), dtype=np.uint8))
        b = ms.HashFingerprint(np.zeros((2, 3), dtype=np.uint8))
        with pytest.raises(HashError):
            hamming(a, b)


def build_segment(pairs, k=8, l=6, bits=4, seed=0):
    cb = ms.gen_codebook(k, l, len(pairs), bits, seed)
    masked = [
        ms.apply_ris(p, cb.amp_masks[i], cb.phase_masks[i]) for i, p in enumerate(pairs)
    ]
    return SegmentBuffer(
        pairs=masked,
        amp_masks=list(cb.amp_masks),
        phase_masks=list(cb.phase_masks),
    )


class TestSelectFrame:
    def test_identical_frames_select_first(self):
        rng = np.random.default_rng(4)
        base = random_pair(rng, 8, 6)
        segment = build_segment([base] * 5)
        prev = fingerprint(base, 4, 4)
        idx, richness, chosen = select_frame(segment, prev, 4, 4)
        assert idx == 0
        assert richness == 0
        np.testing.assert_array_equal(chosen.amplitude, segment.pairs[0].amplitude)

    def test_unmasking_recovers_originals(self):
        rng = np.random.default_rng(5)
        originals = [random_pair(rng, 8, 6) for _ in range(3)]
        segment = build_segment(originals)
        for k, orig in enumerate(originals):
            rec = segment.unmasked(k)
            np.testing.assert_allclose(rec.amplitude, orig.amplitude, rtol=1e-12)
            np.testing.assert_allclose(rec.phase, orig.phase, rtol=0, atol=1e-12)

    def test_structural_change_is_selected(self):
        rng = np.random.default_rng(6)
        base = random_pair(rng, 8, 6)
        outlier = ms.SpectrumPair(base.amplitude[::-1].copy(), -base.phase)
        originals = [base, base, base, base, outlier, outlier]
        segment = build_segment(originals)
        prev = fingerprint(base, 4, 4)
        idx, richness, _ = select_frame(segment, prev, 4, 4)
        assert idx == 4

        # brute-force oracle over the distance chain
        prints = [fingerprint(p, 4, 4) for p in originals]
        chain = [prev] + prints[:-1]
        dists = [hamming(fp, ref) for fp, ref in zip(prints, chain)]
        assert idx == int(np.argmax(dists))
        assert richness == max(dists)

    def test_single_frame_segment(self):
        rng = np.random.default_rng(7)
        segment = build_segment([random_pair(rng, 8, 6)])
        idx, _, _ = select_frame(segment, fingerprint(random_pair(rng, 8, 6), 4, 4), 4, 4)
        assert idx == 0

    def test_richness_recorded_on_buffer(self):
        rng = np.random.default_rng(8)
        segment = build_segment([random_pair(rng, 8, 6) for _ in range(4)])
        _, richness, _ = select_frame(segment, fingerprint(random_pair(rng, 8, 6), 4, 4), 4, 4)
        assert segment.richness == richness


class TestPacking:
    def test_roundtrip(self):
        rng = np.random.default_rng(9)
        fp = ms.HashFingerprint(rng.integers(0, 4, (5, 7)).astype(np.uint8))
        packed = pack_fingerprint(fp)
        assert len(packed) == (35 + 3) // 4
        out = unpack_fingerprint(packed, 5, 7)
        np.testing.assert_array_equal(out.values, fp.values)
