import numpy as np
import pytest

from metaspec import container as cont
from metaspec.cli import main

SCENE = """
center_freq = 5.805e9
bandwidth = 20e6
k_count = 16
m_count = 3
n_count = 3
path = 1.0,0.3,25e-9,0.7,0.6
instant = 0.025
path = 0.9,0.35,26e-9,0.75,0.65
"""

CFG = """
seed = 0
codebook_seed = 3
t_frames = 3
segment_len = 2
outer_iters = 2
theta_iters = 20
hidden_channels = 4
stages = 2
theta_points = 9
phi_points = 9
tau_points = 3
theta_min_deg = 20
theta_max_deg = 75
phi_min_deg = 20
phi_max_deg = 75
tau_min_ns = 0
tau_max_ns = 50
"""


@pytest.fixture
def workspace(tmp_path):
    scene = tmp_path / "scene.txt"
    scene.write_text(SCENE)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG)
    out = tmp_path / "out"
    return scene, cfg, out


def test_stagewise_run(workspace, capsys):
    scene, cfg, out = workspace
    common = ["--config", str(cfg), "--out-dir", str(out)]
    assert main(["simulate", str(scene), "--duration", "0.06", "--rate", "100"] + common) == 0
    frames = cont.read_container(out / "frames.mspc")
    assert frames.values.shape == (6, 16, 7)

    assert main(["sample"] + common) == 0
    sampled = cont.read_container(out / "sampled.mspc")
    assert sampled.values.shape == (3, 2, 16, 7)
    assert (out / "truth.mspc").exists()
    assert (out / "prints.mspc").exists()

    assert main(["encode"] + common) == 0
    encoded = cont.read_container(out / "encoded.mspc")
    assert encoded.values.shape == (2, 18, 7)

    assert main(["decode"] + common) == 0
    decoded = cont.read_container(out / "decoded.mspc")
    assert decoded.values.shape == (3, 2, 16, 7)
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0].startswith("iter,objective_amp")
    assert len(trace) == 3  # header + 2 outer iterations

    assert main(["estimate"] + common) == 0
    assert (out / "peaks.csv").exists()
    assert (out / "spectrum.mspc").exists()

    assert main(["metrics"] + common) == 0
    report = (out / "report.txt").read_text()
    assert "psnr_amp" in report and "aoa_mse" in report
    assert "wall_time" not in report


def test_decode_with_wrong_key_runs(workspace):
    scene, cfg, out = workspace
    common = ["--config", str(cfg), "--out-dir", str(out)]
    assert main(["simulate", str(scene), "--duration", "0.06", "--rate", "100"] + common) == 0
    assert main(["sample"] + common) == 0
    assert main(["encode"] + common) == 0
    assert main(["decode", "--codebook-seed", "999"] + common) == 0
    assert (out / "decoded.mspc").exists()


def test_pipeline_subcommand(workspace, capsys):
    scene, cfg, out = workspace
    rc = main(["pipeline", str(scene), "--config", str(cfg), "--out-dir", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "compression_ratio" in printed
    assert "wall_time" in printed  # stdout carries it; report.txt must not
    assert "wall_time" not in (out / "report.txt").read_text()


def test_missing_file_is_reported(tmp_path, capsys):
    rc = main(["sample", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_flag_overrides_config(workspace):
    scene, cfg, out = workspace
    rc = main([
        "pipeline", str(scene), "--config", str(cfg), "--out-dir", str(out),
        "--sampling", "uniform", "--t-frames", "3",
    ])
    assert rc == 0
    sampled = cont.read_container(out / "sampled.mspc")
    assert sampled.meta["frame_indices"] == "0,2,4"
