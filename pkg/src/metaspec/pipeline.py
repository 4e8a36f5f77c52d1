"""End-to-end pipeline: simulate, sample, encode, decode, estimate, report.

Artifacts are exchanged between stages as containers with conventional
names inside an output directory:

    frames.mspc    complex CFR stack (kind 1), one row block per instant
    truth.mspc     unmasked spectrum pairs of the sampled frames (kind 2)
    sampled.mspc   RIS-masked spectrum pairs selected per segment (kind 2)
    encoded.mspc   MetaSpectrum pair (kind 3) with decode metadata
    decoded.mspc   recovered spectrum pairs (kind 2)
    prints.mspc    fingerprints of the sampled frames (kind 5)
    spectrum.mspc  MUSIC pseudo-spectrum of the first frame (kind 4)
    peaks.csv      per-frame dominant (theta, phi, tau) estimates
    trace.csv      per-iteration decode log
    report.txt     metrics (wall time excluded so reruns are bit-identical)

Every random choice derives from explicit config seeds; two runs with the
same scene and config produce bit-identical artifacts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import container as cont
from .codebook import CodebookId, RisCodebook, gen_codebook
from .codec import MetaSpectrumPair, compression_ratio, differential_encode, shift_add
from .decoder import DecodeConfig, admm_decode
from .hashing import SegmentBuffer, fingerprint, select_frame
from .metrics import MetricsReport, aoa_mse_deg2, interpolate_series, psnr
from .music import SteeringGrid, find_peaks, music_spectrum
from .scene import CfrFrame, MultipathScene, SpectrumPair, apply_ris, gen_cfr, load_scene, split_spectrums


class PipelineError(RuntimeError):
    """Stage failure with the stage name attached."""


@dataclass
class PipelineConfig:
    """All pipeline knobs; loadable from a key=value config file."""

    seed: int = 0
    codebook_seed: int = 1
    codebook_bits: int = 4
    t_frames: int = 10
    shift_d: int = 1
    segment_len: int = 10
    rate_hz: float = 100.0
    sampling: str = "hash"  # hash | uniform
    hash_rx: int = 8
    hash_ry: int = 8
    # decoder (defaults tuned on desk scenes; DecodeConfig keeps the
    # paper-style steepest-descent defaults)
    prior: str = "conv"
    denoiser: str = "tv"
    beta1: float = 2.0
    beta2: float = 2.0
    sd_step: float = 0.5
    inner_iters: int = 600
    theta_iters: int = 300
    outer_iters: int = 18
    theta_lr: float = 0.01
    hidden_channels: int = 16
    stages: int = 3
    tv_lambda: float = 0.15
    tv_iters: int = 30
    tv_time_weight: float = 32.0
    # MUSIC search grid (degrees / nanoseconds).  Azimuth is searched over
    # the front quadrant only: the branch delays depend on azimuth through
    # sin(phi) alone, so phi and 180-phi are indistinguishable.
    source_count: int = 1
    theta_min_deg: float = 10.0
    theta_max_deg: float = 80.0
    theta_points: int = 29
    phi_min_deg: float = 10.0
    phi_max_deg: float = 85.0
    phi_points: int = 26
    tau_min_ns: float = 0.0
    tau_max_ns: float = 60.0
    tau_points: int = 7
    m_sub: int = 0  # 0 = derive from geometry
    n_sub: int = 0
    k_sub: int = 0

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(
            beta1=self.beta1,
            beta2=self.beta2,
            sd_step=self.sd_step,
            inner_iters=self.inner_iters,
            theta_iters=self.theta_iters,
            outer_iters=self.outer_iters,
            seed=self.seed,
            denoiser=self.denoiser,
            prior=self.prior,
            theta_lr=self.theta_lr,
            hidden_channels=self.hidden_channels,
            stages=self.stages,
            tv_lambda=self.tv_lambda,
            tv_iters=self.tv_iters,
            tv_time_weight=self.tv_time_weight,
        )

    def steering_grid(self, scene: MultipathScene) -> SteeringGrid:
        geo, grid = scene.geometry, scene.grid
        return SteeringGrid(
            thetas=np.radians(np.linspace(self.theta_min_deg, self.theta_max_deg, self.theta_points)),
            phis=np.radians(np.linspace(self.phi_min_deg, self.phi_max_deg, self.phi_points)),
            taus=np.linspace(self.tau_min_ns, self.tau_max_ns, self.tau_points) * 1e-9,
            m_sub=self.m_sub or geo.m_count // 2 + 1,
            n_sub=self.n_sub or geo.n_count // 2 + 1,
            k_sub=self.k_sub or min(16, grid.k_count // 2),
        )

    def fingerprint_shape(self, k_count: int, l_count: int) -> tuple[int, int]:
        # Clamp so small scenes keep a valid (rx <= K, ry <= L) fingerprint.
        return min(self.hash_rx, k_count), min(self.hash_ry, l_count)


def load_config(path, **overrides) -> PipelineConfig:
    """Parse a UTF-8 key=value config file; kwargs override file values."""
    values = {}
    text = Path(path).read_text(encoding="utf-8") if path else ""
    types = {f.name: f.type for f in fields(PipelineConfig)}
    casts = {"int": int, "float": float, "str": str}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PipelineError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in types:
            raise PipelineError(f"config line {lineno}: unknown key {key!r}")
        values[key] = casts[types[key]](value.strip())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def simulate_frames(scene: MultipathScene, duration: float, rate: float) -> list[CfrFrame]:
    """Frames at times k/rate for k = 0..round(duration*rate)-1."""
    if rate <= 0:
        raise PipelineError("rate must be positive")
    count = int(round(duration * rate))
    return [gen_cfr(scene, k / rate) for k in range(count)]


def dominant_direction(scene: MultipathScene, t: float) -> tuple[float, float]:
    """(elevation, azimuth) of the strongest path at time t."""
    path = max(scene.paths_at(t), key=lambda p: abs(p.gain))
    return path.elevation, path.azimuth


@dataclass
class PipelineResult:
    report: MetricsReport
    meta: MetaSpectrumPair
    decoded: list[SpectrumPair]
    truth: list[SpectrumPair]
    selected: list[int]
    richness: list[int]
    trace: object
    estimates: list[tuple[float, float, float, float]]  # (theta, phi, tau, magnitude) per frame


def sample_segments(
    pairs: list[SpectrumPair],
    codebook: RisCodebook,
    cfg: PipelineConfig,
) -> tuple[list[int], list[int]]:
    """Select one frame per segment_len-sized segment.

    hash sampling keeps the frame whose fingerprint moved most (the chain
    reference carries across segments); uniform sampling keeps the first
    frame.  Returns (global indices, per-segment richness; richness is 0
    for uniform sampling).
    """
    seg = cfg.segment_len
    if len(pairs) % seg:
        raise PipelineError(f"{len(pairs)} frames do not split into segments of {seg}")
    rx, ry = cfg.fingerprint_shape(*pairs[0].shape)
    selected: list[int] = []
    richness: list[int] = []
    if cfg.sampling == "uniform":
        for start in range(0, len(pairs), seg):
            selected.append(start)
            richness.append(0)
        return selected, richness
    if cfg.sampling != "hash":
        raise PipelineError(f"unknown sampling mode {cfg.sampling!r}")

    masked = [
        apply_ris(p, codebook.amp_masks[i], codebook.phase_masks[i]) for i, p in enumerate(pairs)
    ]
    prev_fp = fingerprint(pairs[0], rx, ry)
    for start in range(0, len(pairs), seg):
        buf = SegmentBuffer(
            pairs=masked[start : start + seg],
            amp_masks=[codebook.amp_masks[i] for i in range(start, start + seg)],
            phase_masks=[codebook.phase_masks[i] for i in range(start, start + seg)],
        )
        k_max, rich, _ = select_frame(buf, prev_fp, rx, ry)
        selected.append(start + k_max)
        richness.append(rich)
        prev_fp = fingerprint(pairs[start + k_max], rx, ry)
    return selected, richness


def estimate_directions(
    pairs: list[SpectrumPair],
    geometry,
    freqs,
    grid: SteeringGrid,
    source_count: int,
    c: float,
) -> tuple[list[tuple[float, float, float, float]], object]:
    """Dominant (theta, phi, tau, magnitude) per frame via the 3D
    pseudo-spectrum.

    Falls back to the global argmax when a frame has no strict local
    maximum.  Also returns the first frame's spectrum for export.
    """
    estimates = []
    first_spec = None
    for pair in pairs:
        spec = music_spectrum(
            pair.to_complex(), grid, geometry, freqs, source_count=source_count, c=c
        )
        if first_spec is None:
            first_spec = spec
        peaks = find_peaks(spec, count=1)
        if peaks:
            estimates.append(peaks[0])
        else:
            i, j, k = np.unravel_index(int(np.argmax(spec.values)), spec.values.shape)
            estimates.append(
                (float(grid.thetas[i]), float(grid.phis[j]), float(grid.taus[k]), float(spec.values[i, j, k]))
            )
    return estimates, first_spec


def run_pipeline(
    scene: MultipathScene,
    cfg: PipelineConfig,
    out_dir=None,
) -> PipelineResult:
    """Run the full chain and (optionally) persist every artifact."""
    start_time = time.perf_counter()
    n_frames = cfg.segment_len * cfg.t_frames
    k_count = scene.grid.k_count
    l_count = scene.geometry.l_count

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            raise PipelineError(f"stage {name}: {exc}") from exc

    frames = stage("simulate", lambda: simulate_frames(scene, n_frames / cfg.rate_hz, cfg.rate_hz))
    pairs = stage("split", lambda: [split_spectrums(f, unwrap_axis=0) for f in frames])
    codebook = stage(
        "codebook", lambda: gen_codebook(k_count, l_count, n_frames, cfg.codebook_bits, cfg.codebook_seed)
    )
    selected, richness = stage("sample", lambda: sample_segments(pairs, codebook, cfg))

    def encode():
        encoded = [
            differential_encode(
                apply_ris(pairs[gi], codebook.amp_masks[gi], codebook.phase_masks[gi]),
                codebook.amp_masks[gi],
                codebook.phase_masks[gi],
                time_index=gi,
            )
            for gi in selected
        ]
        return shift_add(encoded, cfg.shift_d, codebook_id=codebook.identity)

    meta = stage("encode", encode)
    truth = [pairs[gi] for gi in selected]
    sub_cb = codebook.subset(selected)
    decoded, trace = stage("decode", lambda: admm_decode(meta, sub_cb, cfg.decode_config(), truth=truth))

    grid = cfg.steering_grid(scene)
    estimates, first_spec = stage(
        "estimate",
        lambda: estimate_directions(
            decoded, scene.geometry, scene.grid.frequencies, grid,
            cfg.source_count, scene.propagation_speed,
        ),
    )

    # AoA error against the ground-truth trajectory: sparse per-selected-frame
    # estimates are interpolated over the full frame timeline.
    times = np.arange(n_frames) / cfg.rate_hz
    sel_times = times[selected]
    truth_dirs = [dominant_direction(scene, t) for t in times]
    est_theta = interpolate_series(sel_times, [e[0] for e in estimates], times)
    est_phi = interpolate_series(sel_times, [e[1] for e in estimates], times)
    aoa_mse = aoa_mse_deg2(list(zip(est_theta, est_phi)), truth_dirs)

    report = MetricsReport(
        psnr_amp=trace.psnr_amp[-1],
        psnr_phase=trace.psnr_phase[-1],
        aoa_mse=aoa_mse,
        compression_ratio=compression_ratio(cfg.t_frames, cfg.shift_d, k_count),
        hamming_trace=list(trace.hamming_mean),
        wall_time=time.perf_counter() - start_time,
    )
    result = PipelineResult(report, meta, decoded, truth, selected, richness, trace, estimates)
    if out_dir is not None:
        _persist(out_dir, cfg, scene, frames, pairs, codebook, result, first_spec, grid)
    return result


# --------------------------------------------------------------------------- #
# Persistence helpers
# --------------------------------------------------------------------------- #


def _pairs_to_array(pairs: list[SpectrumPair]) -> np.ndarray:
    return np.stack([np.stack([p.amplitude, p.phase]) for p in pairs])


def _array_to_pairs(values: np.ndarray) -> list[SpectrumPair]:
    return [SpectrumPair(v[0], v[1]) for v in values]


def meta_to_container(meta: MetaSpectrumPair, extra: dict[str, str] | None = None) -> cont.Container:
    info = {
        "k": str(meta.k),
        "l": str(meta.l),
        "t": str(meta.t),
        "d": str(meta.d),
        "frame_indices": ",".join(str(i) for i in meta.frame_indices),
    }
    if meta.codebook_id is not None:
        info.update(meta.codebook_id.to_meta())
    if extra:
        info.update(extra)
    return cont.Container(cont.KIND_METASPECTRUM, np.stack([meta.z_amp, meta.z_phase]), info)


def meta_from_container(c: cont.Container) -> MetaSpectrumPair:
    if c.kind != cont.KIND_METASPECTRUM:
        raise PipelineError(f"expected MetaSpectrum container, got kind {c.kind}")
    cb_id = CodebookId.from_meta(c.meta) if "codebook_seed" in c.meta else None
    indices = tuple(int(i) for i in c.meta.get("frame_indices", "").split(",") if i)
    return MetaSpectrumPair(
        z_amp=c.values[0],
        z_phase=c.values[1],
        k=int(c.meta["k"]),
        l=int(c.meta["l"]),
        t=int(c.meta["t"]),
        d=int(c.meta["d"]),
        codebook_id=cb_id,
        frame_indices=indices,
    )


def write_peaks_csv(path, rows: list[tuple[float, float, float, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("theta_deg,phi_deg,tau_ns,magnitude\n")
        for theta, phi, tau, mag in rows:
            fh.write(f"{math.degrees(theta):.6f},{math.degrees(phi):.6f},{tau * 1e9:.6f},{mag:.10g}\n")


def scene_meta(scene: MultipathScene) -> dict[str, str]:
    """Geometry/grid metadata embedded in containers so later stages can
    run without the scene file (uniform subcarrier grids only)."""
    freqs = scene.grid.frequencies
    step = freqs[1] - freqs[0] if freqs.size > 1 else 0.0
    return {
        "scene_m_count": str(scene.geometry.m_count),
        "scene_n_count": str(scene.geometry.n_count),
        "scene_spacing_d": repr(scene.geometry.spacing_d),
        "scene_c": repr(scene.propagation_speed),
        "freq_start": repr(float(freqs[0])),
        "freq_step": repr(float(step)),
    }


def geometry_from_meta(meta: dict[str, str]):
    from .scene import ArrayGeometry

    return ArrayGeometry(
        int(meta["scene_m_count"]), int(meta["scene_n_count"]), float(meta["scene_spacing_d"])
    )


def freqs_from_meta(meta: dict[str, str], k_count: int) -> np.ndarray:
    return float(meta["freq_start"]) + float(meta["freq_step"]) * np.arange(k_count)


def _persist(out_dir, cfg, scene, frames, pairs, codebook, result: PipelineResult, first_spec, grid):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cb_meta = codebook.identity.to_meta()

    cont.write_container(
        out / "frames.mspc",
        cont.Container(
            cont.KIND_CFR_STACK,
            np.stack([f.values for f in frames]),
            {"rate_hz": repr(cfg.rate_hz), **scene_meta(scene)},
        ),
    )
    sampled = [
        apply_ris(pairs[gi], codebook.amp_masks[gi], codebook.phase_masks[gi]) for gi in result.selected
    ]
    sel_meta = dict(cb_meta)
    sel_meta.update(scene_meta(scene))
    sel_meta["frame_indices"] = ",".join(str(i) for i in result.selected)
    sel_meta["richness"] = ",".join(str(r) for r in result.richness)
    sel_meta["shift_d"] = str(cfg.shift_d)
    cont.write_container(
        out / "sampled.mspc", cont.Container(cont.KIND_SPECTRUM_PAIR, _pairs_to_array(sampled), sel_meta)
    )
    cont.write_container(
        out / "truth.mspc",
        cont.Container(cont.KIND_SPECTRUM_PAIR, _pairs_to_array(result.truth), dict(sel_meta)),
    )
    cont.write_container(out / "encoded.mspc", meta_to_container(result.meta, scene_meta(scene)))
    cont.write_container(
        out / "decoded.mspc",
        cont.Container(cont.KIND_SPECTRUM_PAIR, _pairs_to_array(result.decoded), dict(sel_meta)),
    )
    rx, ry = cfg.fingerprint_shape(*pairs[0].shape)
    prints = np.stack([fingerprint(pairs[gi], rx, ry).values for gi in result.selected])
    cont.write_container(
        out / "prints.mspc", cont.Container(cont.KIND_FINGERPRINT, prints, dict(sel_meta))
    )
    if first_spec is not None:
        cont.write_container(
            out / "spectrum.mspc",
            cont.Container(
                cont.KIND_MUSIC_SPECTRUM,
                first_spec.values,
                {
                    "theta_min_deg": repr(math.degrees(grid.thetas[0])),
                    "theta_max_deg": repr(math.degrees(grid.thetas[-1])),
                    "phi_min_deg": repr(math.degrees(grid.phis[0])),
                    "phi_max_deg": repr(math.degrees(grid.phis[-1])),
                    "tau_min_ns": repr(grid.taus[0] * 1e9),
                    "tau_max_ns": repr(grid.taus[-1] * 1e9),
                },
            ),
        )
    result.trace.write_csv(out / "trace.csv")
    write_peaks_csv(out / "peaks.csv", result.estimates)
    result.report.write(out / "report.txt")
