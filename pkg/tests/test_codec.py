import numpy as np
import pytest

import metaspec as ms
from metaspec.codec import CodecError, SensingOperator

from conftest import random_pair


def constant_masks(k, l, amp=1.0, phase=0.0):
    return np.full((k, l), amp), np.full((k, l), phase)


def encode_unmasked(pair, amp_mask, phase_mask, time_index=0):
    masked = ms.apply_ris(pair, amp_mask, phase_mask)
    return ms.differential_encode(masked, amp_mask, phase_mask, time_index)


class TestDifferentialEncode:
    def test_column_differences(self):
        amp_mask, phase_mask = constant_masks(2, 2)
        masked = ms.SpectrumPair(np.array([[1.0, 3.0], [2.0, 5.0]]), np.zeros((2, 2)))
        enc = ms.differential_encode(masked, amp_mask, phase_mask)
        np.testing.assert_array_equal(enc.amp_diff, np.array([[1.0, 2.0], [2.0, 3.0]]))

    def test_single_column_copies(self):
        amp_mask, phase_mask = constant_masks(3, 1, amp=0.5, phase=0.3)
        pair = ms.SpectrumPair(np.array([[1.0], [2.0], [3.0]]), np.array([[0.4], [0.5], [0.6]]))
        masked = ms.apply_ris(pair, amp_mask, phase_mask)
        enc = ms.differential_encode(masked, amp_mask, phase_mask)
        np.testing.assert_allclose(enc.amp_diff, masked.amplitude)
        # first phase column: response subtracted, then mask multiplied
        np.testing.assert_allclose(enc.phase_diff, pair.phase * 0.5)

    def test_phase_response_cancels(self):
        # column-constant phase response: no trace of it in any output column
        rng = np.random.default_rng(0)
        pair = random_pair(rng, 6, 5)
        amp_mask = np.ones((6, 5))
        phase_mask = np.tile(rng.uniform(0, 2 * np.pi, (6, 1)), (1, 5))
        enc = encode_unmasked(pair, amp_mask, phase_mask)
        expected = np.empty((6, 5))
        expected[:, 0] = pair.phase[:, 0]
        expected[:, 1:] = np.diff(pair.phase, axis=1)
        np.testing.assert_allclose(enc.phase_diff, expected, atol=1e-12)

    def test_non_column_constant_mask_rejected(self):
        rng = np.random.default_rng(1)
        pair = random_pair(rng, 4, 4)
        bad = np.ones((4, 4))
        bad[:, 2] = 0.7
        with pytest.raises(CodecError, match="column-constant"):
            ms.differential_encode(pair, bad, np.zeros((4, 4)))


class TestShiftAdd:
    def test_hand_example(self):
        f1 = ms.EncodedFrame(np.array([[1.0], [2.0]]), np.zeros((2, 1)), 0)
        f2 = ms.EncodedFrame(np.array([[10.0], [20.0]]), np.zeros((2, 1)), 1)
        meta = ms.shift_add([f1, f2], d=1)
        np.testing.assert_array_equal(meta.z_amp, np.array([[1.0], [12.0], [20.0]]))

    def test_single_frame_is_identity(self):
        frame = ms.EncodedFrame(np.arange(6.0).reshape(2, 3), np.ones((2, 3)), 0)
        meta = ms.shift_add([frame], d=1)
        np.testing.assert_array_equal(meta.z_amp, frame.amp_diff)
        assert meta.z_amp.shape == (2, 3)

    def test_paper_scale_row_count(self):
        frames = [ms.EncodedFrame(np.zeros((2048, 1)), np.zeros((2048, 1)), i) for i in range(20)]
        meta = ms.shift_add(frames, d=1)
        assert meta.z_amp.shape == (2067, 1)

    def test_shape_mismatch_rejected(self):
        f1 = ms.EncodedFrame(np.zeros((2, 2)), np.zeros((2, 2)), 0)
        f2 = ms.EncodedFrame(np.zeros((3, 2)), np.zeros((3, 2)), 1)
        with pytest.raises(CodecError):
            ms.shift_add([f1, f2], d=1)


class TestCompressionRatio:
    def test_exact_formula(self):
        assert ms.compression_ratio(20, 1, 2048) == 1 / 20 + (1 - 1 / 20) * 1 / 2048

    def test_no_compression_for_single_frame(self):
        assert ms.compression_ratio(1, 3, 100) == 1.0

    def test_zero_shift(self):
        assert ms.compression_ratio(8, 0, 64) == pytest.approx(1 / 8)

    def test_monotone_in_t(self):
        ratios = [ms.compression_ratio(t, 1, 256) for t in range(1, 30)]
        assert all(a > b for a, b in zip(ratios, ratios[1:]))


class TestDifferentialDecode:
    def test_inverse_of_encode_example(self):
        diff = np.array([[1.0, 2.0], [2.0, 3.0]])
        pairs = ms.differential_decode(diff[None], np.zeros((1, 2, 2)))
        np.testing.assert_array_equal(pairs[0].amplitude, np.array([[1.0, 3.0], [2.0, 5.0]]))

    def test_single_column_identity(self):
        amp = np.random.default_rng(2).uniform(0.1, 1, (1, 4, 1))
        pairs = ms.differential_decode(amp, np.zeros_like(amp))
        np.testing.assert_array_equal(pairs[0].amplitude, amp[0])

    def test_roundtrip_recovers_unmasked_spectrums(self):
        # encode with real codebook masks, unmask the differentials, decode
        rng = np.random.default_rng(3)
        for trial in range(10):
            k = int(rng.integers(4, 24))
            l = int(rng.integers(2, 9))
            t = int(rng.integers(1, 6))
            cb = ms.gen_codebook(k, l, t, 4, seed=trial)
            pairs = [random_pair(rng, k, l) for _ in range(t)]
            amp_stack = np.empty((t, k, l))
            ph_stack = np.empty((t, k, l))
            for i, p in enumerate(pairs):
                enc = encode_unmasked(p, cb.amp_masks[i], cb.phase_masks[i], i)
                amp_stack[i] = enc.amp_diff / cb.amp_masks[i]
                ph_stack[i] = enc.phase_diff / cb.amp_masks[i]
            decoded = ms.differential_decode(amp_stack, ph_stack)
            for p, d in zip(pairs, decoded):
                np.testing.assert_allclose(d.amplitude, p.amplitude, rtol=1e-9, atol=1e-12)
                np.testing.assert_allclose(d.phase, p.phase, rtol=1e-9, atol=1e-12)


def dense_operator(masks, d):
    """Materialized block matrix: frame blocks on a sliding row offset."""
    t, k, l = masks.shape
    rows = (k + (t - 1) * d) * l
    dense = np.zeros((rows, t * k * l))
    for i in range(t):
        for r in range(k):
            for c in range(l):
                dense[(r + i * d) * l + c, i * k * l + r * l + c] = masks[i, r, c]
    return dense


class TestSensingOperator:
    def test_identity_for_single_frame_unit_masks(self):
        op = SensingOperator(np.ones((1, 4, 3)), d=1)
        x = np.random.default_rng(4).normal(size=(1, 4, 3))
        np.testing.assert_array_equal(op.forward(x), x[0])
        np.testing.assert_array_equal(op.adjoint(x[0]), x)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(5)
        for t, k, l, d in ((3, 4, 2, 1), (2, 8, 3, 2), (5, 6, 4, 1), (4, 4, 4, 3)):
            masks = rng.uniform(1 / 16, 1.0, (t, k, l))
            op = SensingOperator(masks, d)
            dense = dense_operator(masks, d)
            x = rng.normal(size=(t, k, l))
            z = rng.normal(size=op.out_shape)
            np.testing.assert_allclose(op.forward(x).ravel(), dense @ x.ravel(), atol=1e-10)
            np.testing.assert_allclose(op.adjoint(z).ravel(), dense.T @ z.ravel(), atol=1e-10)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(6)
        masks = rng.uniform(0.1, 1.0, (4, 8, 3))
        op = SensingOperator(masks, d=2)
        for _ in range(50):
            x = rng.normal(size=(4, 8, 3))
            z = rng.normal(size=op.out_shape)
            lhs = np.sum(op.forward(x) * z)
            rhs = np.sum(x * op.adjoint(z))
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)

    def test_linear_and_zero(self):
        rng = np.random.default_rng(7)
        masks = rng.uniform(0.1, 1.0, (3, 5, 2))
        op = SensingOperator(masks, d=1)
        x1 = rng.normal(size=(3, 5, 2))
        x2 = rng.normal(size=(3, 5, 2))
        np.testing.assert_allclose(
            op.forward(1.5 * x1 - 2.0 * x2), 1.5 * op.forward(x1) - 2.0 * op.forward(x2), atol=1e-12
        )
        np.testing.assert_array_equal(op.forward(np.zeros((3, 5, 2))), np.zeros(op.out_shape))

    def test_shape_errors(self):
        op = SensingOperator(np.ones((2, 4, 3)), d=1)
        with pytest.raises(CodecError):
            op.forward(np.zeros((2, 4, 2)))
        with pytest.raises(CodecError):
            op.adjoint(np.zeros((4, 3)))

    def test_row_weight_matches_forward_of_squared_masks(self):
        rng = np.random.default_rng(8)
        masks = rng.uniform(0.1, 1.0, (3, 6, 2))
        op = SensingOperator(masks, d=2)
        np.testing.assert_allclose(op.row_weight(), op.forward(masks))


class TestMetaSpectrumPair:
    def test_row_count_invariant(self):
        with pytest.raises(CodecError):
            ms.MetaSpectrumPair(np.zeros((5, 2)), np.zeros((5, 2)), k=4, l=2, t=3, d=1)
