"""Differential encoding and shifting-addition compression of spectrum pairs.

Encoding replaces each sensor column (beyond the first) of a masked spectrum
by its difference to the previous column.  Because all RIS columns respond
identically per frequency, the masked differences factor as
``unmasked_difference * amp_mask``, which makes the amplitude response the
measurement code for both channels.  The T encoded frames are then zero-
padded with a sliding row offset of D and summed into a single
(K + (T-1)*D) x L MetaSpectrum per channel.

The matching linear model is exposed matrix-free through
:class:`SensingOperator`; a dense materialization exists only in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import CodebookId
from .scene import SpectrumPair


class CodecError(ValueError):
    pass


def _require_column_constant(mask: np.ndarray, name: str) -> None:
    if mask.ndim != 2:
        raise CodecError(f"{name} must be 2-D")
    if not np.all(mask == mask[:, :1]):
        raise CodecError(f"{name} is not column-constant; differential factorization breaks")


@dataclass(frozen=True)
class EncodedFrame:
    """Differentially encoded amplitude/phase matrices of one frame."""

    amp_diff: np.ndarray
    phase_diff: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        if self.amp_diff.shape != self.phase_diff.shape:
            raise CodecError("amplitude and phase differentials must share a shape")
        if not (np.all(np.isfinite(self.amp_diff)) and np.all(np.isfinite(self.phase_diff))):
            raise CodecError("encoded frame contains non-finite entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.amp_diff.shape


@dataclass(frozen=True)
class MetaSpectrumPair:
    """The fused measurement pair plus the metadata needed to decode it."""

    z_amp: np.ndarray
    z_phase: np.ndarray
    k: int
    l: int
    t: int
    d: int
    codebook_id: CodebookId | None = None
    frame_indices: tuple[int, ...] = ()

    def __post_init__(self):
        rows = self.k + (self.t - 1) * self.d
        if self.t < 1 or self.d < 1:
            raise CodecError("need T >= 1 and D >= 1")
        if self.z_amp.shape != (rows, self.l) or self.z_phase.shape != (rows, self.l):
            raise CodecError(
                f"MetaSpectrum shape {self.z_amp.shape} does not match (K+(T-1)D) x L = ({rows}, {self.l})"
            )


def differential_encode(
    masked_pair: SpectrumPair,
    amp_mask: np.ndarray,
    phase_mask: np.ndarray,
    time_index: int = 0,
) -> EncodedFrame:
    """Differentially encode one RIS-masked spectrum pair.

    Amplitude: column j (j>=1) stores masked column j minus column j-1,
    column 0 is copied.  Phase: the same column differences, except column 0
    has the first element's phase response subtracted; the whole phase
    differential is then multiplied entrywise by the amplitude mask so both
    channels share the amplitude response as their code.
    """
    _require_column_constant(np.asarray(amp_mask, float), "amplitude mask")
    _require_column_constant(np.asarray(phase_mask, float), "phase mask")
    amp, phase = masked_pair.amplitude, masked_pair.phase

    amp_diff = np.empty_like(amp)
    amp_diff[:, 0] = amp[:, 0]
    amp_diff[:, 1:] = np.diff(amp, axis=1)

    phase_diff = np.empty_like(phase)
    phase_diff[:, 0] = phase[:, 0] - phase_mask[:, 0]
    phase_diff[:, 1:] = np.diff(phase, axis=1)
    phase_diff = phase_diff * amp_mask

    return EncodedFrame(amp_diff, phase_diff, time_index)


def shift_add(
    frames: list[EncodedFrame],
    d: int,
    codebook_id: CodebookId | None = None,
) -> MetaSpectrumPair:
    """Fuse T encoded frames into one MetaSpectrum pair.

    Frame i is placed at row offset i*d (zero rows elsewhere) and all padded
    frames are summed, giving (K + (T-1)*d) x L per channel.
    """
    if not frames:
        raise CodecError("need at least one frame")
    if d < 1:
        raise CodecError("shift step D must be >= 1")
    k, l = frames[0].shape
    if any(f.shape != (k, l) for f in frames):
        raise CodecError("all encoded frames must share one shape")
    t = len(frames)
    rows = k + (t - 1) * d
    z_amp = np.zeros((rows, l))
    z_phase = np.zeros((rows, l))
    for i, f in enumerate(frames):
        z_amp[i * d : i * d + k] += f.amp_diff
        z_phase[i * d : i * d + k] += f.phase_diff
    return MetaSpectrumPair(
        z_amp,
        z_phase,
        k=k,
        l=l,
        t=t,
        d=d,
        codebook_id=codebook_id,
        frame_indices=tuple(f.time_index for f in frames),
    )


def compression_ratio(t: int, d: int, k: int) -> float:
    """Stored-elements ratio of the fused measurement to the T raw frames:
    1/T + (1 - 1/T) * D/K."""
    if t < 1 or k < 1:
        raise CodecError("need T >= 1 and K >= 1")
    if d < 0:
        raise CodecError("need D >= 0")
    return 1.0 / t + (1.0 - 1.0 / t) * d / k


def differential_decode(
    amp_diffs: np.ndarray,
    phase_diffs: np.ndarray,
) -> list[SpectrumPair]:
    """Invert the differential encoding of a (T, K, L) stack pair.

    Column 0 is copied; every later column adds its differential to the
    already-decoded predecessor, i.e. columns are prefix sums.  On exact
    differentials this recovers the unmasked amplitude and the mask-free
    phase.  Decoded amplitudes may dip below zero for noisy estimates; they
    are clipped at 0 to keep SpectrumPair invariants.
    """
    amp_diffs = np.asarray(amp_diffs, dtype=float)
    phase_diffs = np.asarray(phase_diffs, dtype=float)
    if amp_diffs.ndim == 2:
        amp_diffs, phase_diffs = amp_diffs[None], phase_diffs[None]
    if amp_diffs.shape != phase_diffs.shape:
        raise CodecError("amplitude and phase stacks must share a shape")
    amp = np.cumsum(amp_diffs, axis=2)
    phase = np.cumsum(phase_diffs, axis=2)
    return [SpectrumPair(np.maximum(a, 0.0), p) for a, p in zip(amp, phase)]


@dataclass(frozen=True)
class SensingOperator:
    """Matrix-free forward/adjoint model of mask-then-shift-add.

    Equivalent to the structured block matrix acting on the vectorized
    frame stack, without materializing it: forward masks frame i with
    ``masks[i]`` and accumulates it at row offset i*d; adjoint slices the
    measurement back out and re-applies the masks.
    """

    masks: np.ndarray  # (T, K, L) amplitude masks
    d: int

    def __post_init__(self):
        if self.masks.ndim != 3:
            raise CodecError("masks must be a (T, K, L) stack")
        if self.d < 1:
            raise CodecError("shift step D must be >= 1")

    @property
    def t(self) -> int:
        return self.masks.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]

    @property
    def out_shape(self) -> tuple[int, int]:
        t, k, l = self.masks.shape
        return (k + (t - 1) * self.d, l)

    def forward(self, frames: np.ndarray) -> np.ndarray:
        """Measurement of an unmasked (T, K, L) frame stack."""
        frames = np.asarray(frames)
        if frames.shape != self.masks.shape:
            raise CodecError(f"frame stack {frames.shape} does not match operator {self.masks.shape}")
        t, k, l = self.masks.shape
        out = np.zeros(self.out_shape)
        masked = frames * self.masks
        for i in range(t):
            out[i * self.d : i * self.d + k] += masked[i]
        return out

    def adjoint(self, z: np.ndarray) -> np.ndarray:
        """Transpose action: frame i is the i*d-offset window of z, masked."""
        z = np.asarray(z)
        if z.shape != self.out_shape:
            raise CodecError(f"measurement {z.shape} does not match operator output {self.out_shape}")
        t, k, l = self.masks.shape
        frames = np.empty((t, k, l))
        for i in range(t):
            frames[i] = z[i * self.d : i * self.d + k]
        return frames * self.masks

    def row_weight(self) -> np.ndarray:
        """Per-measurement-entry sum of squared mask values, i.e. the
        diagonal of forward(adjoint(.)); used for scaled backprojection."""
        t, k, l = self.masks.shape
        weight = np.zeros(self.out_shape)
        sq = self.masks ** 2
        for i in range(t):
            weight[i * self.d : i * self.d + k] += sq[i]
        return weight
