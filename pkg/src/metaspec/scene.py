"""Multipath channel simulation for an L-shaped transmissive-element array.

Geometry convention: the array has M sensors on the x branch, N sensors on
the y branch, and one sensor at the origin.  Channel matrices are K x L with
K subcarrier rows and L = M + N + 1 sensor columns ordered as

    [x-branch m=1..M,  origin,  y-branch n=1..N].

Units: frequencies in Hz, delays in seconds, spacing in meters, angles in
radians.  Elevation theta lies in [0, pi/2], azimuth phi in [0, pi) (front
hemisphere).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

C_LIGHT = 3e8


class SceneError(ValueError):
    """Invalid scene parameters or scene description file."""


@dataclass(frozen=True)
class ArrayGeometry:
    """L-shaped sensor array: M x-branch + 1 origin + N y-branch sensors."""

    m_count: int
    n_count: int
    spacing_d: float

    def __post_init__(self):
        if self.m_count < 1 or self.n_count < 1:
            raise SceneError("branch sensor counts must be >= 1")
        if not (self.spacing_d > 0):
            raise SceneError("sensor spacing must be positive")

    @property
    def l_count(self) -> int:
        return self.m_count + self.n_count + 1

    @property
    def origin_column(self) -> int:
        return self.m_count

    def x_column(self, m: int) -> int:
        """Column index of x-branch sensor m (1-based sensor number)."""
        if not 1 <= m <= self.m_count:
            raise SceneError(f"x-branch sensor {m} out of range 1..{self.m_count}")
        return m - 1

    def y_column(self, n: int) -> int:
        """Column index of y-branch sensor n (1-based sensor number)."""
        if not 1 <= n <= self.n_count:
            raise SceneError(f"y-branch sensor {n} out of range 1..{self.n_count}")
        return self.m_count + n

    def delay_factors(self, theta: float, phi: float, c: float) -> np.ndarray:
        """Per-column extra propagation delay (seconds) for a path from
        elevation theta / azimuth phi, relative to the origin sensor."""
        step = self.spacing_d / c * math.sin(phi)
        x_part = np.arange(1, self.m_count + 1) * (step * math.cos(theta))
        y_part = np.arange(1, self.n_count + 1) * (step * math.sin(theta))
        return np.concatenate([x_part, [0.0], y_part])


@dataclass(frozen=True)
class SubcarrierGrid:
    """Uniform OFDM subcarrier frequency grid."""

    frequencies: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float)
        if freqs.ndim != 1 or freqs.size < 1:
            raise SceneError("subcarrier grid must be a non-empty 1-D array")
        if freqs.size > 1 and not np.all(np.diff(freqs) > 0):
            raise SceneError("subcarrier frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", freqs)

    @classmethod
    def from_center(cls, center_hz: float, bandwidth_hz: float, k_count: int) -> "SubcarrierGrid":
        """Grid of k_count tones with spacing bandwidth/k_count around center."""
        if k_count < 1:
            raise SceneError("k_count must be >= 1")
        spacing = bandwidth_hz / k_count
        offsets = (np.arange(k_count) - (k_count - 1) / 2.0) * spacing
        return cls(center_hz + offsets)

    @property
    def k_count(self) -> int:
        return self.frequencies.size


@dataclass(frozen=True)
class Path:
    """One propagation path: complex gain, delay and arrival direction."""

    gain: complex
    tof: float
    elevation: float
    azimuth: float

    def __post_init__(self):
        if not (cmath.isfinite(self.gain) and math.isfinite(self.tof)):
            raise SceneError("path parameters must be finite")
        if self.tof < 0:
            raise SceneError("time of flight must be >= 0")
        if not 0 <= self.elevation <= math.pi / 2:
            raise SceneError("elevation must lie in [0, pi/2]")
        if not 0 <= self.azimuth < math.pi:
            raise SceneError("azimuth must lie in [0, pi)")


@dataclass(frozen=True)
class MultipathScene:
    """Ground-truth propagation scene.

    ``trajectory`` holds (start_time, paths) entries sorted by start time;
    a frame at time t uses the paths of the last entry with start <= t
    (piecewise-constant motion).  Complex gains are part of each entry and
    therefore constant within a coherence segment.  ``snr_db`` switches on
    additive complex Gaussian noise per frame (default: noiseless).
    """

    geometry: ArrayGeometry
    grid: SubcarrierGrid
    trajectory: tuple[tuple[float, tuple[Path, ...]], ...]
    propagation_speed: float = C_LIGHT
    snr_db: float | None = None
    noise_seed: int = 0

    def __post_init__(self):
        if not (self.propagation_speed > 0):
            raise SceneError("propagation speed must be positive")
        if not self.trajectory:
            raise SceneError("scene needs at least one trajectory instant")
        starts = [t for t, _ in self.trajectory]
        if starts != sorted(starts):
            raise SceneError("trajectory instants must be sorted")
        for _, paths in self.trajectory:
            if not paths:
                raise SceneError("each trajectory instant needs at least one path")

    @classmethod
    def static(cls, geometry, grid, paths: Sequence[Path], **kwargs) -> "MultipathScene":
        return cls(geometry, grid, ((0.0, tuple(paths)),), **kwargs)

    @property
    def path_count(self) -> int:
        return len(self.trajectory[0][1])

    def paths_at(self, t: float) -> tuple[Path, ...]:
        active = self.trajectory[0][1]
        for start, paths in self.trajectory:
            if start <= t:
                active = paths
            else:
                break
        return active


@dataclass(frozen=True)
class CfrFrame:
    """Complex K x L channel frequency response at one instant."""

    values: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim != 2:
            raise SceneError("CFR frame must be a 2-D matrix")
        if not np.all(np.isfinite(vals)):
            raise SceneError("CFR frame contains non-finite entries")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SpectrumPair:
    """Amplitude (linear magnitude) and phase (radians) of one CFR frame."""

    amplitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        if amp.shape != ph.shape or amp.ndim != 2:
            raise SceneError("amplitude and phase must be 2-D with equal shape")
        if np.any(amp < 0):
            raise SceneError("amplitude must be non-negative")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)

    @property
    def shape(self) -> tuple[int, int]:
        return self.amplitude.shape

    def to_complex(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)


def gen_cfr(scene: MultipathScene, t: float = 0.0) -> CfrFrame:
    """Generate the K x L channel frequency response at time t.

    Entry (k, col) is the sum over paths of
    gain * exp(-2j*pi*f_k*(tof + extra_delay(col))), with the per-column
    delays of :meth:`ArrayGeometry.delay_factors`.
    """
    paths = scene.paths_at(t)
    freqs = scene.grid.frequencies
    values = np.zeros((scene.grid.k_count, scene.geometry.l_count), dtype=complex)
    for p in paths:
        delays = p.tof + scene.geometry.delay_factors(p.elevation, p.azimuth, scene.propagation_speed)
        values += p.gain * np.exp(-2j * np.pi * np.outer(freqs, delays))
    if scene.snr_db is not None:
        values = values + _noise_like(values, scene.snr_db, scene.noise_seed, t)
    return CfrFrame(values, timestamp=t)


def _noise_like(values: np.ndarray, snr_db: float, seed: int, t: float) -> np.ndarray:
    # Seed mixes the noise seed with the timestamp bits so each frame gets
    # an independent but reproducible draw.
    t_bits = int(np.float64(t).view(np.uint64))
    rng = np.random.default_rng((seed, t_bits))
    sig_power = float(np.mean(np.abs(values) ** 2))
    noise_var = sig_power / 10.0 ** (snr_db / 10.0)
    scale = math.sqrt(noise_var / 2.0)
    return scale * (rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape))


def split_spectrums(frame: CfrFrame, unwrap_axis: int | None = None) -> SpectrumPair:
    """Decompose a CFR frame into amplitude and phase spectrums.

    Phase is the entrywise argument in (-pi, pi] (0 for zero entries).  With
    ``unwrap_axis`` set, the phase is additionally unwrapped along that axis
    once at ingest; all later stages treat phase as raw reals, so the
    recombination identity amplitude*exp(j*phase) holds either way.
    """
    phase = np.angle(frame.values)
    if unwrap_axis is not None:
        phase = np.unwrap(phase, axis=unwrap_axis)
    return SpectrumPair(np.abs(frame.values), phase)


def apply_ris(pair: SpectrumPair, amp_mask: np.ndarray, phase_mask: np.ndarray) -> SpectrumPair:
    """Apply the RIS response: amplitude is scaled entrywise by amp_mask,
    phase_mask is added to the phase."""
    amp_mask = np.asarray(amp_mask, dtype=float)
    phase_mask = np.asarray(phase_mask, dtype=float)
    if amp_mask.shape != pair.shape or phase_mask.shape != pair.shape:
        raise SceneError(
            f"mask shape {amp_mask.shape}/{phase_mask.shape} does not match spectrum {pair.shape}"
        )
    return SpectrumPair(pair.amplitude * amp_mask, pair.phase + phase_mask)


# --------------------------------------------------------------------------- #
# Scene description files
# --------------------------------------------------------------------------- #
#
# Plain-text key=value format, '#' starts a comment.  Keys:
#
#   center_freq   Hz        (required)
#   bandwidth     Hz        (required)
#   k_count       int       (required)
#   m_count       int       (required)
#   n_count       int       (required)
#   spacing_d     meters    (optional; default: half wavelength at center_freq)
#   c             m/s       (optional; default 3e8)
#   snr_db        dB        (optional; default: noiseless)
#   noise_seed    int       (optional; default 0)
#   instant = t             starts a new trajectory entry at time t (seconds)
#   path = alpha_re,alpha_im,tof,elev,azim
#                           appends a path to the current entry (radians);
#                           paths before any `instant` line belong to t=0.

_SCALAR_KEYS = {
    "center_freq": float,
    "bandwidth": float,
    "k_count": int,
    "m_count": int,
    "n_count": int,
    "spacing_d": float,
    "c": float,
    "snr_db": float,
    "noise_seed": int,
}


def parse_scene(text: str) -> MultipathScene:
    """Parse a scene description (see module comment for the grammar).

    Raises SceneError with the offending line number on malformed input.
    """
    scalars: dict[str, float] = {}
    entries: list[tuple[float, list[Path]]] = []

    def current_paths(lineno: int) -> list[Path]:
        if not entries:
            entries.append((0.0, []))
        return entries[-1][1]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SceneError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key == "path":
                fields = [float(v) for v in value.split(",")]
                if len(fields) != 5:
                    raise ValueError("path needs 5 comma-separated values")
                re, im, tof, elev, azim = fields
                current_paths(lineno).append(Path(complex(re, im), tof, elev, azim))
            elif key == "instant":
                entries.append((float(value), []))
            elif key in _SCALAR_KEYS:
                scalars[key] = _SCALAR_KEYS[key](value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except (ValueError, SceneError) as exc:
            raise SceneError(f"line {lineno}: {exc}") from exc

    missing = {"center_freq", "bandwidth", "k_count", "m_count", "n_count"} - scalars.keys()
    if missing:
        raise SceneError(f"missing required keys: {sorted(missing)}")
    if not entries or not entries[0][1]:
        raise SceneError("scene defines no paths")

    c = scalars.get("c", C_LIGHT)
    spacing = scalars.get("spacing_d", c / scalars["center_freq"] / 2.0)
    geometry = ArrayGeometry(int(scalars["m_count"]), int(scalars["n_count"]), spacing)
    grid = SubcarrierGrid.from_center(scalars["center_freq"], scalars["bandwidth"], int(scalars["k_count"]))
    trajectory = tuple((t, tuple(paths)) for t, paths in entries)
    return MultipathScene(
        geometry,
        grid,
        trajectory,
        propagation_speed=c,
        snr_db=scalars.get("snr_db"),
        noise_seed=int(scalars.get("noise_seed", 0)),
    )


def load_scene(path) -> MultipathScene:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene(fh.read())
