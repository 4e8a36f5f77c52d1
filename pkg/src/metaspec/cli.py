"""Command-line interface.

Subcommands cover the pipeline stages; intermediate artifacts live in
--out-dir under conventional names (see pipeline module docstring), so a
full run can be reproduced stage by stage:

    metaspec simulate scene.txt --duration 1.0 --out-dir run/
    metaspec sample   --config desk.cfg --out-dir run/
    metaspec encode   --out-dir run/
    metaspec decode   --out-dir run/
    metaspec estimate --out-dir run/
    metaspec metrics  --out-dir run/

or in one shot: ``metaspec pipeline scene.txt --config desk.cfg --out-dir run/``.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import container as cont
from .codebook import CodebookId, gen_codebook
from .codec import compression_ratio, differential_encode, shift_add
from .decoder import admm_decode
from .hashing import fingerprint, hamming
from .metrics import MetricsReport, aoa_mse_deg2, psnr
from .pipeline import (
    PipelineConfig,
    PipelineError,
    _array_to_pairs,
    _pairs_to_array,
    estimate_directions,
    freqs_from_meta,
    geometry_from_meta,
    load_config,
    load_scene,
    meta_from_container,
    meta_to_container,
    run_pipeline,
    sample_segments,
    scene_meta,
    simulate_frames,
    write_peaks_csv,
)
from .scene import apply_ris, split_spectrums


def _steering_grid_from_meta(cfg: PipelineConfig, meta: dict[str, str], k_count: int):
    from .music import SteeringGrid

    geo = geometry_from_meta(meta)
    return geo, SteeringGrid(
        thetas=np.radians(np.linspace(cfg.theta_min_deg, cfg.theta_max_deg, cfg.theta_points)),
        phis=np.radians(np.linspace(cfg.phi_min_deg, cfg.phi_max_deg, cfg.phi_points)),
        taus=np.linspace(cfg.tau_min_ns, cfg.tau_max_ns, cfg.tau_points) * 1e-9,
        m_sub=cfg.m_sub or geo.m_count // 2 + 1,
        n_sub=cfg.n_sub or geo.n_count // 2 + 1,
        k_sub=cfg.k_sub or min(16, k_count // 2),
    )


def cmd_simulate(scene_path, duration: float, rate: float, out_dir) -> int:
    """Simulate CFR frames and persist them; returns the frame count."""
    scene = load_scene(scene_path)
    frames = simulate_frames(scene, duration, rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = (
        np.stack([f.values for f in frames])
        if frames
        else np.zeros((0, scene.grid.k_count, scene.geometry.l_count), dtype=complex)
    )
    cont.write_container(
        out / "frames.mspc",
        cont.Container(cont.KIND_CFR_STACK, values, {"rate_hz": repr(rate), **scene_meta(scene)}),
    )
    return len(frames)


def cmd_sample(cfg: PipelineConfig, out_dir) -> list[int]:
    """Select one masked pair per segment from frames.mspc."""
    out = Path(out_dir)
    frames_c = cont.read_container(out / "frames.mspc")
    if frames_c.kind != cont.KIND_CFR_STACK:
        raise PipelineError("frames.mspc is not a CFR stack container")
    stack = frames_c.values
    n, k_count, l_count = stack.shape
    from .scene import CfrFrame

    pairs = [split_spectrums(CfrFrame(v), unwrap_axis=0) for v in stack]
    codebook = gen_codebook(k_count, l_count, n, cfg.codebook_bits, cfg.codebook_seed)
    selected, richness = sample_segments(pairs, codebook, cfg)

    sel_meta = codebook.identity.to_meta()
    sel_meta.update({k: frames_c.meta[k] for k in frames_c.meta if k.startswith(("scene_", "freq_"))})
    sel_meta["frame_indices"] = ",".join(str(i) for i in selected)
    sel_meta["richness"] = ",".join(str(r) for r in richness)
    sel_meta["shift_d"] = str(cfg.shift_d)
    sampled = [
        apply_ris(pairs[gi], codebook.amp_masks[gi], codebook.phase_masks[gi]) for gi in selected
    ]
    cont.write_container(
        out / "sampled.mspc",
        cont.Container(cont.KIND_SPECTRUM_PAIR, _pairs_to_array(sampled), dict(sel_meta)),
    )
    cont.write_container(
        out / "truth.mspc",
        cont.Container(
            cont.KIND_SPECTRUM_PAIR, _pairs_to_array([pairs[gi] for gi in selected]), dict(sel_meta)
        ),
    )
    rx, ry = cfg.fingerprint_shape(k_count, l_count)
    prints = np.stack([fingerprint(pairs[gi], rx, ry).values for gi in selected])
    cont.write_container(out / "prints.mspc", cont.Container(cont.KIND_FINGERPRINT, prints, dict(sel_meta)))
    return selected


def cmd_encode(cfg: PipelineConfig, out_dir) -> None:
    """Differentially encode sampled.mspc into encoded.mspc."""
    out = Path(out_dir)
    sampled_c = cont.read_container(out / "sampled.mspc")
    cb_id = CodebookId.from_meta(sampled_c.meta)
    codebook = gen_codebook(cb_id.k, cb_id.l, cb_id.t, cb_id.bits, cb_id.seed)
    indices = [int(i) for i in sampled_c.meta["frame_indices"].split(",")]
    d = int(sampled_c.meta.get("shift_d", cfg.shift_d))
    pairs = _array_to_pairs(sampled_c.values)
    encoded = [
        differential_encode(p, codebook.amp_masks[gi], codebook.phase_masks[gi], time_index=gi)
        for p, gi in zip(pairs, indices)
    ]
    meta = shift_add(encoded, d, codebook_id=codebook.identity)
    extra = {k: sampled_c.meta[k] for k in sampled_c.meta if k.startswith(("scene_", "freq_"))}
    cont.write_container(out / "encoded.mspc", meta_to_container(meta, extra))


def cmd_decode(cfg: PipelineConfig, out_dir, codebook_seed: int | None = None) -> None:
    """ADMM-decode encoded.mspc.

    ``codebook_seed`` overrides the recorded key (a wrong seed demonstrates
    the encryption property: decode runs but degrades).
    """
    out = Path(out_dir)
    meta_c = cont.read_container(out / "encoded.mspc")
    meta = meta_from_container(meta_c)
    cb_id = meta.codebook_id
    if cb_id is None:
        raise PipelineError("encoded.mspc carries no codebook identity")
    seed = cb_id.seed if codebook_seed is None else codebook_seed
    codebook = gen_codebook(cb_id.k, cb_id.l, cb_id.t, cb_id.bits, seed)
    sub = codebook.subset(list(meta.frame_indices))

    truth = None
    truth_path = out / "truth.mspc"
    if truth_path.exists():
        truth = _array_to_pairs(cont.read_container(truth_path).values)
    decoded, trace = admm_decode(meta, sub, cfg.decode_config(), truth=truth)
    extra = {k: meta_c.meta[k] for k in meta_c.meta if k.startswith(("scene_", "freq_"))}
    extra["frame_indices"] = ",".join(str(i) for i in meta.frame_indices)
    cont.write_container(
        out / "decoded.mspc",
        cont.Container(cont.KIND_SPECTRUM_PAIR, _pairs_to_array(decoded), extra),
    )
    trace.write_csv(out / "trace.csv")


def cmd_estimate(cfg: PipelineConfig, out_dir) -> None:
    """Run 3D MUSIC on decoded.mspc; writes spectrum.mspc and peaks.csv."""
    out = Path(out_dir)
    decoded_c = cont.read_container(out / "decoded.mspc")
    pairs = _array_to_pairs(decoded_c.values)
    k_count = pairs[0].shape[0]
    geo, grid = _steering_grid_from_meta(cfg, decoded_c.meta, k_count)
    freqs = freqs_from_meta(decoded_c.meta, k_count)
    c = float(decoded_c.meta["scene_c"])
    estimates, first_spec = estimate_directions(pairs, geo, freqs, grid, cfg.source_count, c)
    write_peaks_csv(out / "peaks.csv", estimates)
    cont.write_container(
        out / "spectrum.mspc",
        cont.Container(cont.KIND_MUSIC_SPECTRUM, first_spec.values, dict(decoded_c.meta)),
    )


def cmd_metrics(cfg: PipelineConfig, out_dir) -> MetricsReport:
    """Compare decoded.mspc against truth.mspc; writes report.txt."""
    out = Path(out_dir)
    decoded_c = cont.read_container(out / "decoded.mspc")
    truth_c = cont.read_container(out / "truth.mspc")
    if decoded_c.values.shape != truth_c.values.shape:
        raise PipelineError(
            f"decoded {decoded_c.values.shape} and truth {truth_c.values.shape} shapes differ"
        )
    decoded = _array_to_pairs(decoded_c.values)
    truth = _array_to_pairs(truth_c.values)
    k_count, l_count = decoded[0].shape
    rx, ry = cfg.fingerprint_shape(k_count, l_count)
    per_frame_hamming = [
        float(hamming(fingerprint(d, rx, ry), fingerprint(t, rx, ry)))
        for d, t in zip(decoded, truth)
    ]

    geo, grid = _steering_grid_from_meta(cfg, decoded_c.meta, k_count)
    freqs = freqs_from_meta(decoded_c.meta, k_count)
    c = float(decoded_c.meta["scene_c"])
    est_dec, _ = estimate_directions(decoded, geo, freqs, grid, cfg.source_count, c)
    est_truth, _ = estimate_directions(truth, geo, freqs, grid, cfg.source_count, c)
    aoa = aoa_mse_deg2(
        [(e[0], e[1]) for e in est_dec],
        [(e[0], e[1]) for e in est_truth],
    )
    report = MetricsReport(
        psnr_amp=psnr(
            np.stack([p.amplitude for p in decoded]), np.stack([p.amplitude for p in truth])
        ),
        psnr_phase=psnr(np.stack([p.phase for p in decoded]), np.stack([p.phase for p in truth])),
        aoa_mse=aoa,
        compression_ratio=compression_ratio(
            len(truth), int(truth_c.meta.get("shift_d", 1)), k_count
        ),
        hamming_trace=per_frame_hamming,
    )
    report.write(out / "report.txt")
    return report


def cmd_pipeline(scene_path, cfg: PipelineConfig, out_dir) -> MetricsReport:
    """Full chain on a scene file; persists all artifacts to out_dir."""
    scene = load_scene(scene_path)
    result = run_pipeline(scene, cfg, out_dir=out_dir)
    return result.report


# --------------------------------------------------------------------------- #
# argparse plumbing
# --------------------------------------------------------------------------- #


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--codebook-seed", type=int, dest="codebook_seed")
    p.add_argument("--codebook-bits", type=int, dest="codebook_bits")
    p.add_argument("--t-frames", type=int, dest="t_frames")
    p.add_argument("--shift-d", type=int, dest="shift_d")
    p.add_argument("--sampling", choices=["hash", "uniform"])
    p.add_argument("--denoiser", choices=["sd", "tv"])
    p.add_argument("--prior", choices=["conv", "none"])
    p.add_argument("--out-dir", default="out", dest="out_dir")


def _config_from_args(args) -> PipelineConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "seed",
            "codebook_seed",
            "codebook_bits",
            "t_frames",
            "shift_d",
            "sampling",
            "denoiser",
            "prior",
        )
    }
    return load_config(getattr(args, "config", None), **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metaspec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate CFR frames from a scene file")
    p.add_argument("scene")
    p.add_argument("--duration", type=float, required=True, help="seconds")
    p.add_argument("--rate", type=float, default=100.0, help="frames per second")
    _add_common(p)
    p.set_defaults(func=_run_simulate)

    for name, func, needs_scene in (
        ("sample", _run_sample, False),
        ("encode", _run_encode, False),
        ("decode", _run_decode, False),
        ("estimate", _run_estimate, False),
        ("metrics", _run_metrics, False),
        ("pipeline", _run_pipeline, True),
    ):
        p = sub.add_parser(name)
        if needs_scene:
            p.add_argument("scene")
        _add_common(p)
        p.set_defaults(func=func)
    return parser


def _run_simulate(args) -> int:
    cfg = _config_from_args(args)
    count = cmd_simulate(args.scene, args.duration, args.rate, args.out_dir)
    print(f"wrote {count} frames to {args.out_dir}/frames.mspc")
    return 0


def _run_sample(args) -> int:
    selected = cmd_sample(_config_from_args(args), args.out_dir)
    print(f"selected frames {selected}")
    return 0


def _run_encode(args) -> int:
    cmd_encode(_config_from_args(args), args.out_dir)
    print(f"wrote {args.out_dir}/encoded.mspc")
    return 0


def _run_decode(args) -> int:
    cfg = _config_from_args(args)
    cmd_decode(cfg, args.out_dir, codebook_seed=args.codebook_seed)
    print(f"wrote {args.out_dir}/decoded.mspc")
    return 0


def _run_estimate(args) -> int:
    cmd_estimate(_config_from_args(args), args.out_dir)
    print(f"wrote {args.out_dir}/peaks.csv")
    return 0


def _run_metrics(args) -> int:
    report = cmd_metrics(_config_from_args(args), args.out_dir)
    for line in report.lines():
        print(line)
    return 0


def _run_pipeline(args) -> int:
    started = time.perf_counter()
    report = cmd_pipeline(args.scene, _config_from_args(args), args.out_dir)
    for line in report.lines():
        print(line)
    print(f"wall_time = {time.perf_counter() - started:.3f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface stage errors as exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
