import math

import numpy as np
import pytest

import metaspec as ms
from metaspec.scene import SceneError, parse_scene

HALF_WAVE = 3e8 / 5.805e9 / 2


def single_path_scene(geometry, grid, tof=0.25, elev=0.3, azim=0.9, gain=1.0 + 0j):
    return ms.MultipathScene.static(geometry, grid, [ms.Path(gain, tof, elev, azim)])


class TestGenCfr:
    def test_quarter_period_delay_gives_minus_j(self):
        # single path, f=1 Hz, tof=0.25 s: h = exp(-j*pi/2) = -j at the origin
        geo = ms.ArrayGeometry(1, 1, 1.0)
        grid = ms.SubcarrierGrid(np.array([1.0]))
        frame = ms.gen_cfr(single_path_scene(geo, grid, tof=0.25))
        origin = frame.values[0, geo.origin_column]
        assert origin == pytest.approx(-1j, abs=1e-12)

    def test_zero_delay_returns_gain(self):
        geo = ms.ArrayGeometry(1, 1, 1.0)
        grid = ms.SubcarrierGrid(np.array([3.7e9]))
        gain = 0.8 - 0.4j
        frame = ms.gen_cfr(single_path_scene(geo, grid, tof=0.0, gain=gain))
        assert frame.values[0, geo.origin_column] == pytest.approx(gain, abs=1e-12)

    def test_vertical_elevation_removes_x_branch_delay(self):
        geo = ms.ArrayGeometry(3, 2, HALF_WAVE)
        grid = ms.SubcarrierGrid.from_center(5.805e9, 40e6, 8)
        frame = ms.gen_cfr(single_path_scene(geo, grid, tof=10e-9, elev=math.pi / 2, azim=0.7))
        for m in (1, 2, 3):
            np.testing.assert_allclose(
                frame.values[:, geo.x_column(m)], frame.values[:, geo.origin_column], rtol=1e-12
            )

    def test_steering_consistency_over_angle_grid(self):
        # adjacent x-branch sensors differ by -2*pi*f*d*cos(theta)*sin(phi)/c
        geo = ms.ArrayGeometry(4, 3, HALF_WAVE)
        grid = ms.SubcarrierGrid.from_center(5.805e9, 40e6, 8)
        for theta in np.linspace(0.1, 1.4, 5):
            for phi in np.linspace(0.1, 3.0, 5):
                frame = ms.gen_cfr(single_path_scene(geo, grid, tof=15e-9, elev=theta, azim=phi))
                expected = -2 * np.pi * grid.frequencies * geo.spacing_d * math.cos(theta) * math.sin(phi) / 3e8
                for m in (1, 2, 3):
                    ratio = frame.values[:, geo.x_column(m + 1)] / frame.values[:, geo.x_column(m)]
                    delta = np.angle(ratio)
                    circular_err = np.angle(np.exp(1j * (delta - expected)))
                    np.testing.assert_allclose(circular_err, np.zeros_like(delta), atol=1e-9)

    def test_linear_in_path_gains(self, small_geometry, small_grid):
        p1 = ms.Path(1.0 + 0.2j, 20e-9, 0.5, 0.8)
        p2 = ms.Path(0.4 - 0.6j, 35e-9, 0.9, 1.4)
        both = ms.gen_cfr(ms.MultipathScene.static(small_geometry, small_grid, [p1, p2]))
        f1 = ms.gen_cfr(ms.MultipathScene.static(small_geometry, small_grid, [p1]))
        f2 = ms.gen_cfr(ms.MultipathScene.static(small_geometry, small_grid, [p2]))
        np.testing.assert_allclose(both.values, f1.values + f2.values, rtol=1e-12)

    def test_rejects_empty_paths_and_bad_parameters(self, small_geometry, small_grid):
        with pytest.raises(SceneError):
            ms.MultipathScene.static(small_geometry, small_grid, [])
        with pytest.raises(SceneError):
            ms.Path(complex(np.nan, 0), 1e-9, 0.5, 0.5)
        with pytest.raises(SceneError):
            ms.Path(1.0, -1e-9, 0.5, 0.5)
        with pytest.raises(SceneError):
            ms.Path(1.0, 1e-9, 2.0, 0.5)  # elevation outside [0, pi/2]

    def test_noise_is_reproducible_and_scaled(self, small_geometry, small_grid):
        paths = [ms.Path(1.0, 20e-9, 0.5, 0.8)]
        noisy = ms.MultipathScene.static(small_geometry, small_grid, paths, snr_db=20.0, noise_seed=5)
        clean = ms.MultipathScene.static(small_geometry, small_grid, paths)
        a = ms.gen_cfr(noisy, 0.25)
        b = ms.gen_cfr(noisy, 0.25)
        np.testing.assert_array_equal(a.values, b.values)
        c = ms.gen_cfr(noisy, 0.26)
        assert not np.array_equal(a.values, c.values)
        noise_power = np.mean(np.abs(a.values - ms.gen_cfr(clean, 0.25).values) ** 2)
        signal_power = np.mean(np.abs(ms.gen_cfr(clean, 0.25).values) ** 2)
        assert 10 * math.log10(signal_power / noise_power) == pytest.approx(20.0, abs=2.0)


class TestSplitSpectrums:
    def test_minus_j_entry(self):
        frame = ms.CfrFrame(np.array([[-1j]]))
        pair = ms.split_spectrums(frame)
        assert pair.amplitude[0, 0] == pytest.approx(1.0)
        assert pair.phase[0, 0] == pytest.approx(-math.pi / 2)

    def test_zero_entry_has_zero_phase(self):
        pair = ms.split_spectrums(ms.CfrFrame(np.array([[0.0 + 0j, 3 + 4j]])))
        assert pair.amplitude[0, 0] == 0.0
        assert pair.phase[0, 0] == 0.0
        assert pair.amplitude[0, 1] == pytest.approx(5.0)
        assert pair.phase[0, 1] == pytest.approx(math.atan2(4, 3))

    def test_recombination_identity(self, two_path_scene):
        frame = ms.gen_cfr(two_path_scene)
        for unwrap_axis in (None, 0, 1):
            pair = ms.split_spectrums(frame, unwrap_axis=unwrap_axis)
            np.testing.assert_allclose(pair.to_complex(), frame.values, rtol=0, atol=1e-12 * np.abs(frame.values).max())


class TestApplyRis:
    def test_identity_masks(self, two_path_scene):
        pair = ms.split_spectrums(ms.gen_cfr(two_path_scene))
        out = ms.apply_ris(pair, np.ones(pair.shape), np.zeros(pair.shape))
        np.testing.assert_array_equal(out.amplitude, pair.amplitude)
        np.testing.assert_array_equal(out.phase, pair.phase)

    def test_entrywise_product_and_sum(self):
        pair = ms.SpectrumPair(np.array([[2.0]]), np.array([[0.1]]))
        out = ms.apply_ris(pair, np.array([[0.5]]), np.array([[0.2]]))
        assert out.amplitude[0, 0] == pytest.approx(1.0)
        assert out.phase[0, 0] == pytest.approx(0.3)

    def test_shape_mismatch_rejected(self):
        pair = ms.SpectrumPair(np.ones((2, 2)), np.zeros((2, 2)))
        with pytest.raises(SceneError):
            ms.apply_ris(pair, np.ones((2, 3)), np.zeros((2, 2)))


SCENE_TEXT = """
# desk scene
center_freq = 5.805e9
bandwidth = 40e6
k_count = 16
m_count = 3
n_count = 3
path = 1.0,0.2,20e-9,0.6,0.8
instant = 0.05
path = 0.9,0.1,22e-9,0.65,0.85
"""


class TestSceneFile:
    def test_parse_roundtrip(self):
        scene = parse_scene(SCENE_TEXT)
        assert scene.grid.k_count == 16
        assert scene.geometry.l_count == 7
        assert scene.geometry.spacing_d == pytest.approx(HALF_WAVE)
        assert len(scene.trajectory) == 2
        assert scene.paths_at(0.0)[0].gain == 1.0 + 0.2j
        assert scene.paths_at(0.06)[0].tof == pytest.approx(22e-9)

    def test_missing_keys(self):
        with pytest.raises(SceneError, match="missing required"):
            parse_scene("center_freq = 1e9\n")

    def test_error_carries_line_number(self):
        bad = SCENE_TEXT.replace("path = 1.0,0.2,20e-9,0.6,0.8", "path = 1.0,0.2")
        with pytest.raises(SceneError, match="line 8"):
            parse_scene(bad)
        with pytest.raises(SceneError, match="line 2"):
            parse_scene("\nnot a key value line\n" + SCENE_TEXT)

    def test_unknown_key_rejected(self):
        with pytest.raises(SceneError, match="unknown key"):
            parse_scene(SCENE_TEXT + "\nwavelength = 3\n")
