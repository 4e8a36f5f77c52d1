"""Four-level fingerprints of spectrum pairs and hash-driven frame sampling.

A fingerprint reduces an amplitude/phase pair to a small Rx x Ry matrix over
{0,1,2,3}: both channels are block-mean resized, and each cell encodes
whether the resized amplitude and phase lie above or below their channel
means.  The Hamming distance between consecutive fingerprints measures how
much a frame changed, and each segment records the frame with the largest
change.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import SpectrumPair


class HashError(ValueError):
    pass


@dataclass(frozen=True)
class HashFingerprint:
    """Rx x Ry matrix with entries in {0,1,2,3}."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.uint8)
        if vals.ndim != 2:
            raise HashError("fingerprint must be 2-D")
        if vals.size and vals.max() > 3:
            raise HashError("fingerprint entries must lie in {0,1,2,3}")
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class SegmentBuffer:
    """One time segment of RIS-masked spectrum pairs plus the masks needed
    to undo the masking before hashing.  ``richness`` records the Hamming
    distance of the selected frame once selection ran."""

    pairs: list[SpectrumPair]
    amp_masks: list[np.ndarray]
    phase_masks: list[np.ndarray]
    richness: int | None = None

    def __post_init__(self):
        if not self.pairs:
            raise HashError("segment must contain at least one pair")
        if not len(self.pairs) == len(self.amp_masks) == len(self.phase_masks):
            raise HashError("one mask pair per spectrum pair required")
        shape = self.pairs[0].shape
        if any(p.shape != shape for p in self.pairs):
            raise HashError("all pairs in a segment must share one shape")

    def __len__(self) -> int:
        return len(self.pairs)

    def unmasked(self, k: int) -> SpectrumPair:
        """Original spectrum pair of frame k, recovered with the mask prior
        (amplitude levels are strictly positive, so division is safe)."""
        p = self.pairs[k]
        return SpectrumPair(p.amplitude / self.amp_masks[k], p.phase - self.phase_masks[k])


def resize_mean(matrix: np.ndarray, rx: int, ry: int) -> np.ndarray:
    """Block-mean downsample ``matrix`` to rx x ry.

    The input is partitioned into near-equal blocks (sizes differ by at most
    one row/column); each output cell is the mean of its block.
    """
    matrix = np.asarray(matrix, dtype=float)
    k, l = matrix.shape
    if rx > k or ry > l:
        raise HashError(f"target {rx}x{ry} exceeds input {k}x{l}")
    if rx < 1 or ry < 1:
        raise HashError("target dims must be >= 1")
    row_edges = np.round(np.linspace(0, k, rx + 1)).astype(int)
    col_edges = np.round(np.linspace(0, l, ry + 1)).astype(int)
    rows = np.add.reduceat(matrix, row_edges[:-1], axis=0)
    blocks = np.add.reduceat(rows, col_edges[:-1], axis=1)
    counts = np.outer(np.diff(row_edges), np.diff(col_edges))
    return blocks / counts


def fingerprint(pair: SpectrumPair, rx: int = 8, ry: int = 8) -> HashFingerprint:
    """Four-level fingerprint of a spectrum pair.

    Cell value: 3 if resized amplitude and phase are both >= their channel
    means, 2 if only the amplitude is, 1 if only the phase is, 0 otherwise.
    """
    amp = resize_mean(pair.amplitude, rx, ry)
    ph = resize_mean(pair.phase, rx, ry)
    code = 2 * (amp >= amp.mean()).astype(np.uint8) + (ph >= ph.mean()).astype(np.uint8)
    return HashFingerprint(code)


def hamming(a: HashFingerprint, b: HashFingerprint) -> int:
    """Number of cells where two fingerprints differ."""
    if a.shape != b.shape:
        raise HashError(f"fingerprint shapes differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a.values != b.values))


def select_frame(
    segment: SegmentBuffer,
    prev_fingerprint: HashFingerprint,
    rx: int = 8,
    ry: int = 8,
) -> tuple[int, int, SpectrumPair]:
    """Pick the segment frame whose fingerprint changed most.

    Fingerprints are computed on the un-masked spectrums.  Frame k is scored
    against frame k-1; frame 0 against ``prev_fingerprint`` (the previous
    segment's selected fingerprint).  Returns (index, richness, masked pair)
    with the lowest index winning ties; richness is also recorded on the
    segment.
    """
    prints = [fingerprint(segment.unmasked(k), rx, ry) for k in range(len(segment))]
    distances = np.empty(len(segment), dtype=int)
    ref = prev_fingerprint
    for k, fp in enumerate(prints):
        distances[k] = hamming(fp, ref)
        ref = fp
    k_max = int(np.argmax(distances))
    segment.richness = int(distances[k_max])
    return k_max, segment.richness, segment.pairs[k_max]


def pack_fingerprint(fp: HashFingerprint) -> bytes:
    """Pack a fingerprint into 2 bits per cell, row-major."""
    flat = fp.values.ravel()
    padded = np.zeros((flat.size + 3) // 4 * 4, dtype=np.uint8)
    padded[: flat.size] = flat
    grouped = padded.reshape(-1, 4)
    packed = grouped[:, 0] << 6 | grouped[:, 1] << 4 | grouped[:, 2] << 2 | grouped[:, 3]
    return packed.astype(np.uint8).tobytes()


def unpack_fingerprint(data: bytes, rx: int, ry: int) -> HashFingerprint:
    """Inverse of :func:`pack_fingerprint` for an rx x ry fingerprint."""
    raw = np.frombuffer(data, dtype=np.uint8)
    cells = np.empty(raw.size * 4, dtype=np.uint8)
    cells[0::4] = raw >> 6 & 3
    cells[1::4] = raw >> 4 & 3
    cells[2::4] = raw >> 2 & 3
    cells[3::4] = raw & 3
    if cells.size < rx * ry:
        raise HashError("packed data too short for requested shape")
    return HashFingerprint(cells[: rx * ry].reshape(rx, ry))
