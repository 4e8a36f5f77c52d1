"""RIS amplitude/phase response codebooks.

A codebook holds, for each of T sensing instants, the K x L amplitude and
phase response matrices of the transmissive elements.  All elements share
one hardware structure, so within a mask every column is identical
(column-constant); responses are quantized to 2**bits levels.  The codebook
doubles as the decode key: it is fully determined by (seed, bits, K, L, T)
and is regenerated from that identity tuple rather than stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CodebookError(ValueError):
    pass


@dataclass(frozen=True)
class CodebookId:
    """Regeneration identity of a codebook."""

    seed: int
    bits: int
    k: int
    l: int
    t: int

    def to_meta(self) -> dict[str, str]:
        return {
            "codebook_seed": str(self.seed),
            "codebook_bits": str(self.bits),
            "codebook_k": str(self.k),
            "codebook_l": str(self.l),
            "codebook_t": str(self.t),
        }

    @classmethod
    def from_meta(cls, meta: dict[str, str]) -> "CodebookId":
        return cls(
            seed=int(meta["codebook_seed"]),
            bits=int(meta["codebook_bits"]),
            k=int(meta["codebook_k"]),
            l=int(meta["codebook_l"]),
            t=int(meta["codebook_t"]),
        )


@dataclass(frozen=True)
class RisCodebook:
    """T pairs of column-constant, quantized K x L response matrices.

    Amplitude entries come from {1/2**b, 2/2**b, ..., 1} (never 0, so the
    masked measurements stay invertible); phase entries from the uniform
    2**b-level grid over [0, 2*pi).
    """

    amp_masks: np.ndarray  # (T, K, L)
    phase_masks: np.ndarray  # (T, K, L)
    bits: int
    seed: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.amp_masks.shape

    @property
    def identity(self) -> CodebookId:
        t, k, l = self.amp_masks.shape
        return CodebookId(self.seed, self.bits, k, l, t)

    def subset(self, indices) -> "RisCodebook":
        """Codebook restricted to the given time indices (e.g. the sampled
        frames of each segment).  Keeps seed/bits for provenance."""
        idx = np.asarray(indices, dtype=int)
        return RisCodebook(self.amp_masks[idx], self.phase_masks[idx], self.bits, self.seed)


def gen_codebook(k_count: int, l_count: int, t_count: int, bits: int, seed: int) -> RisCodebook:
    """Draw a codebook uniformly over the quantized response levels.

    Per time index and per subcarrier one amplitude level and one phase
    level are drawn and replicated across all L columns.  Deterministic for
    a fixed seed.
    """
    if min(k_count, l_count, t_count) < 1:
        raise CodebookError("codebook dimensions must be >= 1")
    if not 1 <= bits <= 16:
        raise CodebookError("bits must lie in 1..16")
    levels = 2 ** bits
    rng = np.random.default_rng(seed)
    amp_col = (rng.integers(1, levels + 1, size=(t_count, k_count)) / levels).astype(float)
    phase_col = rng.integers(0, levels, size=(t_count, k_count)) * (2.0 * np.pi / levels)
    amp = np.repeat(amp_col[:, :, None], l_count, axis=2)
    phase = np.repeat(phase_col[:, :, None], l_count, axis=2)
    return RisCodebook(amp, phase, bits, seed)


def validate_codebook(cb: RisCodebook, k_count: int, l_count: int, t_count: int) -> list[str]:
    """Report violated codebook invariants; an empty list means valid."""
    violations = []
    expected = (t_count, k_count, l_count)
    for name, masks in (("amplitude", cb.amp_masks), ("phase", cb.phase_masks)):
        if masks.shape != expected:
            violations.append(f"{name} masks have shape {masks.shape}, expected {expected}")
    if violations:
        return violations

    levels = 2 ** cb.bits
    if not np.all(cb.amp_masks > 0):
        violations.append("amplitude masks contain non-positive entries")
    amp_steps = cb.amp_masks * levels
    if not np.allclose(amp_steps, np.round(amp_steps), atol=1e-12) or np.any(cb.amp_masks > 1):
        violations.append("amplitude entries are not on the 1/2**b..1 level grid")
    phase_steps = cb.phase_masks * levels / (2.0 * np.pi)
    on_grid = np.allclose(phase_steps, np.round(phase_steps), atol=1e-9)
    if not on_grid or np.any(cb.phase_masks < 0) or np.any(cb.phase_masks >= 2.0 * np.pi):
        violations.append("phase entries are not on the 2**b-level grid over [0, 2*pi)")
    for name, masks in (("amplitude", cb.amp_masks), ("phase", cb.phase_masks)):
        if not np.all(masks == masks[:, :, :1]):
            violations.append(f"{name} masks are not column-constant")
    return violations
