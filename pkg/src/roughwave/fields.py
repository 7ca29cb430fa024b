"""Spectral fields on the truncated lattice and their grid transforms.

A field is stored as one complex coefficient per lattice mode, with the
convention ``u(x) = sum_n coeff(n) exp(i n . x)`` on the torus of side
``2 pi``.  Norms are taken with respect to the normalized measure, so the
squared mean of a real field over a fine enough grid equals the sum of
squared coefficient magnitudes.

Grid transforms round-trip through FFT arrays of a 5-smooth size chosen
large enough that the operations of interest (pointwise products of a given
order) are free of wrap-around contamination on the retained ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import TruncatedLattice

__all__ = [
    "five_smooth",
    "product_grid",
    "SpectralField",
    "FieldSeries",
    "GridPlan",
]


def five_smooth(m: int) -> int:
    """Smallest integer >= m whose prime factors are all in {2, 3, 5}."""
    if m <= 1:
        return 1
    best = None
    p2 = 1
    while p2 < 2 * m:
        p23 = p2
        while p23 < 2 * m:
            p235 = p23
            while p235 < m:
                p235 *= 5
            if best is None or p235 < best:
                best = p235
            p23 *= 3
        p2 *= 2
    return best


def product_grid(order: int, cutoff: int, cap: int | None = None) -> int:
    """Grid size for alias-free pointwise products.

    With all factors supported on the ball of radius ``cutoff``, an
    ``order``-fold product has true frequencies up to ``order * cutoff``.
    Retaining the ball of radius ``cap`` (default: ``cutoff``) without
    wrap-around contamination requires the grid to exceed
    ``order * cutoff + cap``; the result is rounded up to a 5-smooth size.
    """
    if cap is None:
        cap = cutoff
    return five_smooth(order * cutoff + cap + 1)


def _mode_scatter_indices(lattice: TruncatedLattice, gridsize: int):
    m = lattice.modes
    return (m[:, 0] % gridsize, m[:, 1] % gridsize)


@dataclass(frozen=True)
class SpectralField:
    """One snapshot of a field: lattice, time stamp, complex coefficients."""

    lattice: TruncatedLattice
    time: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape != (self.lattice.size,):
            raise ValueError(
                f"expected {self.lattice.size} coefficients, got shape {c.shape}"
            )
        if c.dtype != np.complex128:
            object.__setattr__(self, "coeffs", c.astype(np.complex128))

    def with_coeffs(self, coeffs: np.ndarray, time: float | None = None) -> "SpectralField":
        return SpectralField(
            self.lattice, self.time if time is None else time, coeffs
        )

    def default_gridsize(self) -> int:
        return five_smooth(max(2 * self.lattice.cutoff + 1, 8))

    def to_grid(self, gridsize: int | None = None) -> np.ndarray:
        """Real-space samples on a uniform grid; real part of the inverse FFT.

        For coefficient vectors satisfying the conjugation rule the imaginary
        part vanishes identically, so returning the real part is lossless.
        """
        g = self.to_grid_complex(gridsize)
        return np.ascontiguousarray(g.real)

    def to_grid_complex(self, gridsize: int | None = None) -> np.ndarray:
        G = self.default_gridsize() if gridsize is None else int(gridsize)
        if G < 2 * self.lattice.cutoff + 1:
            raise ValueError("gridsize too small to hold the mode ball")
        spec = np.zeros((G, G), dtype=np.complex128)
        i1, i2 = _mode_scatter_indices(self.lattice, G)
        spec[i1, i2] = self.coeffs
        # numpy's inverse transform divides by G^2; undo it so grid values
        # are plain exponential sums of the coefficients.
        return np.fft.ifft2(spec) * (G * G)

    @classmethod
    def from_grid(
        cls,
        lattice: TruncatedLattice,
        grid: np.ndarray,
        time: float = 0.0,
    ) -> "SpectralField":
        """Project grid samples back onto the lattice ball."""
        G = grid.shape[0]
        if grid.shape != (G, G):
            raise ValueError("grid must be square")
        spec = np.fft.fft2(grid) / (G * G)
        i1, i2 = _mode_scatter_indices(lattice, G)
        return cls(lattice, time, spec[i1, i2])

    def value_at(self, x) -> complex:
        """Exact evaluation of the exponential sum at a point of the torus."""
        phase = self.lattice.modes @ np.asarray(x, dtype=np.float64)
        return complex(np.sum(self.coeffs * np.exp(1j * phase)))

    def is_real(self, tol: float = 1e-10) -> bool:
        return self.lattice.is_hermitian(self.coeffs, tol)


@dataclass(frozen=True)
class FieldSeries:
    """A time-indexed family of snapshots sharing one lattice.

    ``frames[k]`` holds the coefficients at ``times[k]``.
    """

    lattice: TruncatedLattice
    times: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        f = np.asarray(self.frames)
        if f.ndim != 2 or f.shape != (t.shape[0], self.lattice.size):
            raise ValueError(
                f"frames must have shape (len(times), {self.lattice.size})"
            )
        if f.dtype != np.complex128:
            f = f.astype(np.complex128)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "frames", f)

    def __len__(self) -> int:
        return self.times.shape[0]

    def __getitem__(self, k: int) -> SpectralField:
        if isinstance(k, slice):
            raise TypeError("slicing a series is not supported; index frames directly")
        return SpectralField(self.lattice, float(self.times[k]), self.frames[k])

    def with_frames(self, frames: np.ndarray) -> "FieldSeries":
        return FieldSeries(self.lattice, self.times, frames)

    def dt(self) -> float:
        """Uniform spacing of the time grid (validates uniformity)."""
        d = np.diff(self.times)
        if d.size == 0:
            raise ValueError("series has a single frame; no spacing defined")
        if not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
            raise ValueError("time grid is not uniform")
        return float(d[0])


class GridPlan:
    """Precomputed scatter/gather maps between a lattice and a real FFT grid.

    Converts hermitian coefficient vectors to real-space samples (and back)
    through half-spectrum transforms.  Built once and reused, this is the
    workhorse for pointwise products: the caller picks a grid size via
    :func:`product_grid` so that the retained ball stays free of wrap-around
    contamination.  A ``float32`` mode is available for throughput-critical
    ensemble loops.
    """

    def __init__(self, lattice: TruncatedLattice, gridsize: int, dtype=np.float64):
        from scipy import fft as sfft

        G = int(gridsize)
        if G < 2 * lattice.cutoff + 1:
            raise ValueError("gridsize too small to hold the mode ball")
        self.lattice = lattice
        self.gridsize = G
        self.real_dtype = np.dtype(dtype)
        self.complex_dtype = np.dtype(
            np.complex64 if self.real_dtype == np.float32 else np.complex128
        )
        self._fft = sfft
        m = lattice.modes
        upper = m[:, 1] >= 0
        self._upper = np.nonzero(upper)[0]
        self._lower = np.nonzero(~upper)[0]
        mu = m[self._upper]
        self._scatter = (mu[:, 0] % G, mu[:, 1])
        ml = m[self._lower]
        self._gather_conj = ((-ml[:, 0]) % G, -ml[:, 1])
        self._half_shape = (G, G // 2 + 1)

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        """Real-space samples of a hermitian coefficient vector."""
        G = self.gridsize
        spec = np.zeros(self._half_shape, dtype=self.complex_dtype)
        spec[self._scatter] = coeffs[self._upper]
        return self._fft.irfft2(spec, s=(G, G)) * self.real_dtype.type(G * G)

    def from_grid(self, grid: np.ndarray) -> np.ndarray:
        """Project real samples back onto lattice coefficients."""
        G = self.gridsize
        spec = self._fft.rfft2(grid) * self.complex_dtype.type(1.0 / (G * G))
        out = np.empty(self.lattice.size, dtype=self.complex_dtype)
        out[self._upper] = spec[self._scatter]
        out[self._lower] = np.conj(spec[self._gather_conj])
        return out

    def multiply(self, *coeff_vectors) -> np.ndarray:
        """Pointwise product of several fields, projected back to the ball."""
        g = self.to_grid(coeff_vectors[0])
        for c in coeff_vectors[1:]:
            g = g * self.to_grid(c)
        return self.from_grid(g)
