"""Joint 2D angle-of-arrival / time-of-flight estimation via 3D MUSIC.

The recovered complex frames are smoothed SpotFi-style: every combination
of a k'-subcarrier window, an m'-sensor x-branch window and an n'-sensor
y-branch window yields one subvector

    [ origin at the window's first subcarrier,
      x sensors (sensor-major) over the k' subcarriers,
      y sensors (sensor-major) over the k' subcarriers ],

of dimension 1 + k'*m' + k'*n'.  Averaging the outer products over all
windows and frames decorrelates coherent multipath.  The steering vector
matches the first window exactly, with the time of flight entering through
the per-subcarrier frequency factor exp(-2j*pi*f*tau) in both branch blocks
and the reference factor exp(-2j*pi*f_1*tau) in the origin entry.  Sliding
windows reuse the same vector up to a narrowband approximation (fractional
bandwidth effects), which is the usual smoothing trade-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene import C_LIGHT, ArrayGeometry, SubcarrierGrid

EPS_SPECTRUM = 1e-12  # regularizer added to the subspace quadratic form


class MusicError(ValueError):
    pass


@dataclass(frozen=True)
class SteeringGrid:
    """Search axes for (theta, phi, tau) plus the smoothing subarray sizes."""

    thetas: np.ndarray
    phis: np.ndarray
    taus: np.ndarray
    m_sub: int
    n_sub: int
    k_sub: int

    def __post_init__(self):
        for name in ("thetas", "phis", "taus"):
            axis = np.asarray(getattr(self, name), dtype=float)
            if axis.ndim != 1 or axis.size < 1:
                raise MusicError(f"{name} must be a non-empty 1-D grid")
            if axis.size > 1 and not np.all(np.diff(axis) > 0):
                raise MusicError(f"{name} must be sorted ascending")
            object.__setattr__(self, name, axis)
        if min(self.m_sub, self.n_sub, self.k_sub) < 1:
            raise MusicError("subarray sizes must be >= 1")

    @classmethod
    def default(cls, geometry: ArrayGeometry, grid: SubcarrierGrid, thetas, phis, taus) -> "SteeringGrid":
        return cls(
            thetas=np.asarray(thetas, float),
            phis=np.asarray(phis, float),
            taus=np.asarray(taus, float),
            m_sub=geometry.m_count // 2 + 1,
            n_sub=geometry.n_count // 2 + 1,
            k_sub=min(16, grid.k_count // 2),
        )

    @property
    def subvector_dim(self) -> int:
        return 1 + self.k_sub * (self.m_sub + self.n_sub)

    def shape(self) -> tuple[int, int, int]:
        return (self.thetas.size, self.phis.size, self.taus.size)


@dataclass(frozen=True)
class MusicSpectrum:
    """Pseudo-spectrum magnitudes over the (theta, phi, tau) grid."""

    values: np.ndarray
    grid: SteeringGrid

    def __post_init__(self):
        if self.values.shape != self.grid.shape():
            raise MusicError("spectrum shape does not match grid")


def _check_subarrays(grid: SteeringGrid, geometry: ArrayGeometry, k_count: int) -> None:
    if not 0 < grid.k_sub < k_count:
        raise MusicError(f"need 0 < k_sub < K, got k_sub={grid.k_sub}, K={k_count}")
    if not 0 < grid.m_sub < geometry.m_count:
        raise MusicError(f"need 0 < m_sub < M, got m_sub={grid.m_sub}, M={geometry.m_count}")
    if not 0 < grid.n_sub < geometry.n_count:
        raise MusicError(f"need 0 < n_sub < N, got n_sub={grid.n_sub}, N={geometry.n_count}")


def steering_vector(
    theta: float,
    phi: float,
    tau: float,
    grid: SteeringGrid,
    geometry: ArrayGeometry,
    freqs: np.ndarray,
    c: float = C_LIGHT,
) -> np.ndarray:
    """Steering vector for one (theta, phi, tau) hypothesis.

    Layout matches the smoothing subvectors: origin entry first, then the
    x-branch block (m = 1..m_sub outer, subcarrier inner), then the
    y-branch block.
    """
    freqs = np.asarray(freqs, dtype=float)
    _check_subarrays(grid, geometry, freqs.size)
    f = freqs[: grid.k_sub]
    w = 2j * np.pi
    dx = geometry.spacing_d * np.cos(theta) * np.sin(phi) / c
    dy = geometry.spacing_d * np.sin(theta) * np.sin(phi) / c
    m = np.arange(1, grid.m_sub + 1)
    n = np.arange(1, grid.n_sub + 1)
    x_block = np.exp(-w * np.outer(m * dx, f) - w * tau * f[None, :]).ravel()
    y_block = np.exp(-w * np.outer(n * dy, f) - w * tau * f[None, :]).ravel()
    return np.concatenate([[np.exp(-w * f[0] * tau)], x_block, y_block])


def smooth_covariance(
    frames: np.ndarray,
    grid: SteeringGrid,
    geometry: ArrayGeometry,
) -> np.ndarray:
    """Smoothed covariance of complex frames.

    ``frames`` is one K x L matrix or an (n, K, L) stack.  Each subvector
    combines the origin sensor at a window's first subcarrier with the
    first m' x-branch and n' y-branch sensors over a k'-subcarrier window;
    the window slides across subcarriers and every window of every frame
    contributes one rank-1 outer product.  Sliding across subcarriers
    rotates coherent paths against each other through their time-of-flight
    terms, which decorrelates them.  The sensor blocks stay anchored at the
    branch roots: shifting them would scale the two branch blocks by
    different carrier-frequency phase factors while the origin entry stays
    put, moving the subvector off the steering manifold.  The result is
    Hermitian positive semidefinite of size 1 + k'*(m' + n').
    """
    frames = np.asarray(frames, dtype=complex)
    if frames.ndim == 2:
        frames = frames[None]
    n_frames, k_count, l_count = frames.shape
    if l_count != geometry.l_count:
        raise MusicError(f"frames have {l_count} columns, geometry expects {geometry.l_count}")
    _check_subarrays(grid, geometry, k_count)

    ks, ms, ns = grid.k_sub, grid.m_sub, grid.n_sub
    origin = geometry.origin_column
    dim = grid.subvector_dim
    subvectors = []
    for frame in frames:
        for k0 in range(k_count - ks + 1):
            rows = slice(k0, k0 + ks)
            v = np.empty(dim, dtype=complex)
            v[0] = frame[k0, origin]
            v[1 : 1 + ks * ms] = frame[rows, :ms].T.ravel()  # sensor-major
            v[1 + ks * ms :] = frame[rows, geometry.m_count + 1 : geometry.m_count + 1 + ns].T.ravel()
            subvectors.append(v)
    stack = np.stack(subvectors)
    return stack.T @ stack.conj() / stack.shape[0]


def music_spectrum(
    frames: np.ndarray,
    grid: SteeringGrid,
    geometry: ArrayGeometry,
    freqs: np.ndarray,
    source_count: int = 1,
    c: float = C_LIGHT,
) -> MusicSpectrum:
    """Evaluate the 3D pseudo-spectrum 1 / (a^H E_N E_N^H a + eps).

    ``source_count`` fixes the signal-subspace dimension; the noise
    subspace E_N collects the eigenvectors of the smallest eigenvalues.
    """
    cov = smooth_covariance(frames, grid, geometry)
    if not np.any(cov):
        raise MusicError("all-zero frames give a degenerate covariance")
    if source_count >= cov.shape[0]:
        raise MusicError(f"source_count must be < covariance dim {cov.shape[0]}")
    _, vecs = np.linalg.eigh(cov)
    noise = vecs[:, : cov.shape[0] - source_count]

    freqs = np.asarray(freqs, dtype=float)
    f = freqs[: grid.k_sub]
    w = 2j * np.pi
    sin_phi = np.sin(grid.phis)
    dx = np.outer(np.cos(grid.thetas), sin_phi).ravel() * (geometry.spacing_d / c)
    dy = np.outer(np.sin(grid.thetas), sin_phi).ravel() * (geometry.spacing_d / c)
    mf = np.outer(np.arange(1, grid.m_sub + 1), f).ravel()
    nf = np.outer(np.arange(1, grid.n_sub + 1), f).ravel()
    x_angle = np.exp(-w * np.outer(mf, dx))  # (m'*k', n_theta*n_phi)
    y_angle = np.exp(-w * np.outer(nf, dy))

    n_dir = dx.size
    values = np.empty(grid.shape())
    tau_x = np.tile(f, grid.m_sub)
    tau_y = np.tile(f, grid.n_sub)
    for i_tau, tau in enumerate(grid.taus):
        a = np.empty((grid.subvector_dim, n_dir), dtype=complex)
        a[0] = np.exp(-w * f[0] * tau)
        a[1 : 1 + x_angle.shape[0]] = x_angle * np.exp(-w * tau * tau_x)[:, None]
        a[1 + x_angle.shape[0] :] = y_angle * np.exp(-w * tau * tau_y)[:, None]
        proj = noise.conj().T @ a
        denom = np.sum(np.abs(proj) ** 2, axis=0) + EPS_SPECTRUM
        values[:, :, i_tau] = (1.0 / denom).reshape(grid.thetas.size, grid.phis.size)
    return MusicSpectrum(values, grid)


def find_peaks(spec: MusicSpectrum, count: int = 1) -> list[tuple[float, float, float, float]]:
    """Strongest strict local maxima of the pseudo-spectrum.

    A cell is a peak if it strictly exceeds all of its (up to) 26 grid
    neighbors; constant regions therefore yield none.  Returns up to
    ``count`` (theta, phi, tau, magnitude) tuples sorted by magnitude
    descending, ties broken by grid order; fewer peaks than requested is
    not an error.
    """
    if count < 1:
        raise MusicError("count must be >= 1")
    v = spec.values
    footprint = np.ones((3, 3, 3), dtype=bool)
    footprint[1, 1, 1] = False
    neighbor_max = ndimage.maximum_filter(v, footprint=footprint, mode="constant", cval=-np.inf)
    mask = v > neighbor_max
    idx = np.argwhere(mask)
    if idx.size == 0:
        return []
    mags = v[mask]
    order = np.lexsort((np.arange(mags.size), -mags))[:count]
    grid = spec.grid
    return [
        (
            float(grid.thetas[i]),
            float(grid.phis[j]),
            float(grid.taus[k]),
            float(v[i, j, k]),
        )
        for i, j, k in idx[order]
    ]
