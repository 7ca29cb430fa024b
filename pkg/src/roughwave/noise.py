"""Space-time white noise on the lattice and its exact wave-kernel increments.

The driving noise has independent standard complex Brownian coefficients on
half of the mode ball, extended by conjugation so the field is real, with a
real Brownian motion on the zero mode.  Every coefficient has increment
variance equal to the step length.

The forcing entering the wave equation is this noise filtered by the
fractional weight ``bracket(n)**alpha``.  Over one time step the stochastic
convolution against the wave kernel and its time derivative form a jointly
Gaussian pair per mode whose covariance has a closed form; sampling that
pair exactly (via its Cholesky factor) makes the per-step update of the
linear evolution exact in law for any step size.

Random draws come from counter-based bit generators keyed by
``(seed, stream)`` with the counter encoding ``(realization, step)``, so any
(realization, step) block can be regenerated independently and in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import TruncatedLattice

__all__ = [
    "TimeGrid",
    "NoisePath",
    "sample_noise_path",
    "convolution_covariance",
    "convolution_cholesky",
    "exact_convolution_increment",
]

_STREAM_PV = 0
_STREAM_INCREMENT = 1
_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``0, dt, 2*dt, ..., nsteps*dt``."""

    dt: float
    nsteps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.nsteps < 0:
            raise ValueError("nsteps must be nonnegative")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nsteps + 1, dtype=np.float64) * self.dt

    @property
    def horizon(self) -> float:
        return self.nsteps * self.dt


def _one_minus_sinc(x: np.ndarray) -> np.ndarray:
    """1 - sin(x)/x, evaluated without cancellation for small arguments."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = np.abs(x) < 0.5
    xs = x[small]
    x2 = xs * xs
    # alternating Taylor series of 1 - sinc, nested for stability
    out[small] = (x2 / 6.0) * (
        1.0 - (x2 / 20.0) * (1.0 - (x2 / 42.0) * (1.0 - x2 / 72.0))
    )
    xl = x[~small]
    out[~small] = 1.0 - np.sin(xl) / xl
    return out


def convolution_covariance(brackets, dt: float, alpha: float):
    """Covariance of the one-step stochastic convolution pair per mode.

    Returns ``(cpp, cpv, cvv)`` where ``cpp`` is the variance of the
    position-component convolution, ``cvv`` of its time derivative, and
    ``cpv`` their covariance, for modes with the given bracket values.
    """
    w = np.asarray(brackets, dtype=np.float64)
    theta = dt * w
    i_ss = 0.5 * dt * _one_minus_sinc(2.0 * theta)
    i_vv = 0.5 * dt * (2.0 - _one_minus_sinc(2.0 * theta))
    i_sc = np.sin(theta) ** 2 / (2.0 * w)
    col = w ** (2.0 * alpha)
    cpp = col / (w * w) * i_ss
    cvv = col * i_vv
    cpv = col / w * i_sc
    return cpp, cpv, cvv


def convolution_cholesky(brackets, dt: float, alpha: float):
    """Lower Cholesky factor (l11, l21, l22) of the per-mode 2x2 covariance."""
    cpp, cpv, cvv = convolution_covariance(brackets, dt, alpha)
    l11 = np.sqrt(cpp)
    l21 = cpv / l11
    l22 = np.sqrt(np.maximum(cvv - l21 * l21, 0.0))
    return l11, l21, l22


def exact_convolution_increment(brackets, dt: float, alpha: float, draws):
    """Sample the exact one-step convolution pair from unit-variance draws.

    ``draws`` is a pair ``(z1, z2)`` of standard (complex or real) normal
    arrays; the returned ``(P, V)`` has the closed-form joint law of the
    stochastic convolution and its derivative over one step.
    """
    z1, z2 = draws
    l11, l21, l22 = convolution_cholesky(brackets, dt, alpha)
    P = l11 * z1
    V = l21 * z1 + l22 * z2
    return P, V


@lru_cache(maxsize=32)
def _half_mode_data(cutoff: int):
    """Canonical half of the mode ball plus scatter indices.

    The half set keeps modes with positive first component, or zero first
    component and positive second component; the zero mode is handled
    separately as a real coefficient.
    """
    lat = TruncatedLattice(cutoff)
    m = lat.modes
    half = np.nonzero((m[:, 0] > 0) | ((m[:, 0] == 0) & (m[:, 1] > 0)))[0]
    conj_of_half = lat.conjugate_perm[half]
    zero = int(np.nonzero((m[:, 0] == 0) & (m[:, 1] == 0))[0][0])
    return half, conj_of_half, zero


def _block_generator(seed: int, stream: int, realization: int, step: int):
    bg = np.random.Philox(
        key=np.array([seed, stream], dtype=np.uint64),
        counter=np.array([0, 0, realization, step], dtype=np.uint64),
    )
    return np.random.Generator(bg)


def draw_hermitian_normals(
    cutoff: int,
    seed: int,
    realization: int,
    step: int,
    stream: int,
    ncomponents: int,
    dtype=np.complex128,
):
    """Independent standard normal coefficient vectors with conjugation symmetry.

    Returns ``ncomponents`` arrays over the full mode ball.  Half modes carry
    ``(x + i y) / sqrt(2)`` with independent unit normals, their negations the
    conjugate value, and the zero mode a real unit normal.  Every coefficient
    has unit second absolute moment.
    """
    half, conj_of_half, zero = _half_mode_data(cutoff)
    nh = half.shape[0]
    size = TruncatedLattice(cutoff).size
    gen = _block_generator(seed, stream, realization, step)
    real_dtype = np.float32 if dtype == np.complex64 else np.float64
    flat = gen.standard_normal(ncomponents * (2 * nh + 1), dtype=real_dtype)
    out = []
    for c in range(ncomponents):
        blk = flat[c * (2 * nh + 1) : (c + 1) * (2 * nh + 1)]
        x, y, z0 = blk[:nh], blk[nh : 2 * nh], blk[2 * nh]
        v = np.zeros(size, dtype=dtype)
        v[half] = (x + 1j * y) * real_dtype(_SQRT_HALF)
        v[conj_of_half] = np.conj(v[half])
        v[zero] = z0
        out.append(v)
    return out


@dataclass(frozen=True)
class NoisePath:
    """Lazy view of one noise realization on a lattice and time grid.

    Blocks are regenerated on demand from the counter-based generator, so a
    path object is cheap and two paths with equal ``(seed, realization)``
    produce identical draws.  The convolution-pair draws and the plain
    Brownian increments come from separate streams: no consumer uses both
    jointly, and separating them keeps each consumer's law independent of
    the other's draw layout.
    """

    lattice: TruncatedLattice
    grid: TimeGrid
    seed: int
    realization: int

    def pv_draws(self, step: int):
        """Unit-variance draw pair feeding the exact convolution increment."""
        self._check_step(step)
        z1, z2 = draw_hermitian_normals(
            self.lattice.cutoff, self.seed, self.realization, step, _STREAM_PV, 2
        )
        return z1, z2

    def increment(self, step: int) -> np.ndarray:
        """Brownian increment of the noise coefficients over one step."""
        self._check_step(step)
        (z,) = draw_hermitian_normals(
            self.lattice.cutoff,
            self.seed,
            self.realization,
            step,
            _STREAM_INCREMENT,
            1,
        )
        return z * np.sqrt(self.grid.dt)

    def _check_step(self, step: int):
        if not 0 <= step < self.grid.nsteps:
            raise IndexError(
                f"step {step} outside range [0, {self.grid.nsteps})"
            )


def sample_noise_path(
    lattice: TruncatedLattice, grid: TimeGrid, seed: int, realization: int = 0
) -> NoisePath:
    """Construct the noise realization for ``(seed, realization)``."""
    return NoisePath(lattice, grid, int(seed), int(realization))
