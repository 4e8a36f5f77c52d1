"""Reconstruction and sensing quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PSNR_CAP_DB = 200.0  # reported instead of +inf for exact reconstructions


def psnr(estimate: np.ndarray, truth: np.ndarray, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB, 10*log10(peak^2 / MSE).

    ``peak`` defaults to the largest absolute value of the ground truth.
    Exact matches report the 200 dB cap rather than infinity.
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    mse = float(np.mean((estimate - truth) ** 2))
    if peak is None:
        peak = float(np.max(np.abs(truth)))
    if mse == 0.0 or peak == 0.0:
        return PSNR_CAP_DB if mse == 0.0 else -PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB)


def match_peaks_to_paths(
    peaks: list[tuple[float, float, float, float]],
    truths: list[tuple[float, float]],
) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Greedily pair estimated (theta, phi) peaks with true directions.

    Peaks arrive sorted by magnitude; each truth is claimed by the closest
    unmatched peak (angular euclidean distance).  Returns
    [(estimated, true), ...] pairs for every truth that found a peak.
    """
    remaining = [(p[0], p[1]) for p in peaks]
    matches = []
    for truth in truths:
        if not remaining:
            break
        dists = [math.hypot(e[0] - truth[0], e[1] - truth[1]) for e in remaining]
        best = int(np.argmin(dists))
        matches.append((remaining.pop(best), truth))
    return matches


def aoa_mse_deg2(
    estimates: list[tuple[float, float]],
    truths: list[tuple[float, float]],
) -> float:
    """Mean squared 2D-AoA error in squared degrees.

    Inputs are (elevation, azimuth) radians pairs; the mean runs over both
    angle components of every pair.
    """
    if len(estimates) != len(truths):
        raise ValueError("need one estimate per truth")
    errs = []
    for (te, pe), (tt, pt) in zip(estimates, truths):
        errs.append(math.degrees(te - tt) ** 2)
        errs.append(math.degrees(pe - pt) ** 2)
    return float(np.mean(errs))


def interpolate_series(sample_times, sample_values, query_times) -> np.ndarray:
    """Linear interpolation with edge hold, for sparse AoA estimates."""
    return np.interp(query_times, sample_times, sample_values)


@dataclass
class MetricsReport:
    """End-of-pipeline metric bundle.

    ``hamming_trace`` carries the per-iteration mean fingerprint distance
    when produced by a decode, or per-frame distances when produced by a
    static comparison.  ``wall_time`` is informational and excluded from
    persisted report files so identical runs stay bit-identical.
    """

    psnr_amp: float | None = None
    psnr_phase: float | None = None
    aoa_mse: float | None = None
    compression_ratio: float | None = None
    hamming_trace: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def lines(self, include_wall_time: bool = False) -> list[str]:
        out = []
        for key in ("psnr_amp", "psnr_phase", "aoa_mse", "compression_ratio"):
            value = getattr(self, key)
            if value is not None:
                out.append(f"{key} = {value:.10g}")
        if self.hamming_trace:
            out.append("hamming_trace = " + ",".join(f"{v:.6g}" for v in self.hamming_trace))
        if include_wall_time:
            out.append(f"wall_time = {self.wall_time:.3f}")
        return out

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.lines()) + "\n")
