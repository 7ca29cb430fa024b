"""Stochastic-object constructions: the linear field, its renormalized powers,
and their iterated wave-kernel integrals.

The driving field is the truncated stochastic convolution of the fractional
noise against the wave kernel.  Its pointwise variance grows with the
cutoff, so plain powers diverge; the renormalized square and cube subtract
the variance curve in the standard Hermite pattern (``u**2 - sigma`` and
``u**3 - 3*sigma*u``).  Higher objects are built by pointwise multiplication
and the in-homogeneous wave integral applied in sequence.

All products are evaluated on grids large enough to keep the retained mode
ball free of wrap-around contamination, and the wave integral uses an exact
one-step kernel recursion that integrates piecewise-linear forcing exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldSeries, GridPlan, SpectralField, product_grid
from .lattice import TruncatedLattice
from .noise import (
    NoisePath,
    TimeGrid,
    _STREAM_PV,
    _one_minus_sinc,
    convolution_covariance,
    draw_hermitian_normals,
    exact_convolution_increment,
)

__all__ = [
    "SYMBOL_NAMES",
    "sigma_curve",
    "linear_variance",
    "linear_evolution",
    "wick_square",
    "wick_cube",
    "duhamel",
    "WickSymbolSet",
    "build_symbol_set",
    "ensemble_profile",
]

#: Construction order of the standard object family: each entry is either a
#: noise functional (linear field, renormalized powers), a pointwise product
#: with earlier entries, or a wave integral of an earlier entry.
SYMBOL_NAMES = (
    "linear",
    "square",
    "cube",
    "cube_int",
    "quartic",
    "quintic",
    "quintic_int",
    "septic_int",
    "nonic_int",
)


def linear_variance(brackets, t: float, alpha: float) -> np.ndarray:
    """Exact per-mode variance of the linear field at time t.

    Coincides with the position variance of the one-step stochastic
    convolution over a step of length t, since the field starts from zero.
    """
    cpp, _, _ = convolution_covariance(np.asarray(brackets, dtype=np.float64), t, alpha)
    return cpp


def sigma_curve(cutoff: int, times, alpha: float) -> np.ndarray:
    """Pointwise variance of the linear field: sum of mode variances.

    Vectorized over ``times``; the value at t is
    ``sum_n bracket(n)**(2*alpha - 2) * (t/2 - sin(2*t*bracket(n))/(4*bracket(n)))``.
    """
    lat = TruncatedLattice(int(cutoff))
    w = lat.brackets
    t = np.atleast_1d(np.asarray(times, dtype=np.float64))
    theta = 2.0 * t[:, None] * w[None, :]
    integrals = 0.5 * t[:, None] * _one_minus_sinc(theta)
    out = (w ** (2.0 * alpha - 2.0))[None, :] * integrals
    vals = out.sum(axis=1)
    return vals if np.ndim(times) else vals


def _step_rotation(brackets: np.ndarray, dt: float):
    """Homogeneous one-step wave propagator entries (c, s/w, -w*s)."""
    w = brackets
    c = np.cos(dt * w)
    s = np.sin(dt * w)
    return c, s / w, -w * s, s


def linear_evolution(
    path: NoisePath,
    alpha: float,
    store: str = "all",
    initial=None,
    return_velocity: bool = False,
):
    """March the stochastic linear wave field across the path's time grid.

    The update per step combines the exact homogeneous rotation of the
    (position, velocity) pair with the exactly sampled stochastic convolution
    increment, so the discrete trajectory has the true law at every grid
    time regardless of step size.

    ``store='all'`` keeps every frame, ``store='final'`` only the endpoints.
    """
    if store not in ("all", "final"):
        raise ValueError("store must be 'all' or 'final'")
    lat = path.lattice
    grid = path.grid
    w = lat.brackets
    c, s_over_w, minus_ws, _ = _step_rotation(w, grid.dt)
    if initial is None:
        u = np.zeros(lat.size, dtype=np.complex128)
        v = np.zeros(lat.size, dtype=np.complex128)
    else:
        u = np.array(initial[0], dtype=np.complex128)
        v = np.array(initial[1], dtype=np.complex128)
    keep_all = store == "all"
    frames = [u.copy()] if keep_all else None
    vframes = [v.copy()] if (keep_all and return_velocity) else None
    for k in range(grid.nsteps):
        z1, z2 = path.pv_draws(k)
        P, V = exact_convolution_increment(w, grid.dt, alpha, (z1, z2))
        u, v = c * u + s_over_w * v + P, minus_ws * u + c * v + V
        if keep_all:
            frames.append(u.copy())
            if return_velocity:
                vframes.append(v.copy())
    if keep_all:
        series = FieldSeries(lat, grid.times, np.array(frames))
        if return_velocity:
            return series, FieldSeries(lat, grid.times, np.array(vframes))
        return series
    times = np.array([0.0, grid.horizon])
    series = FieldSeries(lat, times, np.array([np.zeros_like(u), u]))
    if return_velocity:
        vser = FieldSeries(lat, times, np.array([np.zeros_like(v), v]))
        return series, vser
    return series


def _as_series(obj) -> FieldSeries:
    if isinstance(obj, FieldSeries):
        return obj
    raise TypeError(f"expected a FieldSeries, got {type(obj).__name__}")


def wick_square(field_obj: SpectralField, alpha: float, plan: GridPlan | None = None):
    """Renormalized square: pointwise square minus the variance curve."""
    lat = field_obj.lattice
    if plan is None:
        plan = GridPlan(lat, product_grid(2, lat.cutoff))
    sig = float(sigma_curve(lat.cutoff, field_obj.time, alpha))
    coeffs = plan.multiply(field_obj.coeffs, field_obj.coeffs).astype(np.complex128)
    coeffs[lat.index_of((0, 0))] -= sig
    return field_obj.with_coeffs(coeffs)


def wick_cube(field_obj: SpectralField, alpha: float, plan: GridPlan | None = None):
    """Renormalized cube: pointwise cube minus three variances times the field."""
    lat = field_obj.lattice
    if plan is None:
        plan = GridPlan(lat, product_grid(3, lat.cutoff))
    sig = float(sigma_curve(lat.cutoff, field_obj.time, alpha))
    coeffs = plan.multiply(
        field_obj.coeffs, field_obj.coeffs, field_obj.coeffs
    ).astype(np.complex128)
    coeffs -= 3.0 * sig * field_obj.coeffs
    return field_obj.with_coeffs(coeffs)


def _filon_coefficients(brackets: np.ndarray, dt: float, dtype=np.float64):
    """One-step update weights for the forced wave equation with
    piecewise-linear forcing.

    Given endpoint forcing values ``F0`` and ``F1``, the exact update of the
    (position, velocity) pair is::

        y'  = c y + (s/w) yd + F0 * a_y + (F1 - F0) * b_y
        yd' = -w s y + c yd + F0 * a_v + (F1 - F0) * b_v

    with ``a_y = (1 - c)/w**2``, ``b_y = (dt*w - s)/(dt*w**3)``,
    ``a_v = s/w``, ``b_v = (1 - c)/(dt*w**2)``, all evaluated without
    cancellation.
    """
    w = brackets.astype(np.float64)
    theta = dt * w
    c = np.cos(theta)
    s = np.sin(theta)
    one_minus_c = 2.0 * np.sin(0.5 * theta) ** 2
    a_y = one_minus_c / (w * w)
    b_y = _one_minus_sinc(theta) / (w * w)
    a_v = s / w
    b_v = one_minus_c / (dt * w * w)
    rot = (c, s / w, -w * s)
    coef = (a_y, b_y, a_v, b_v)
    if dtype == np.float32:
        rot = tuple(r.astype(np.float32) for r in rot)
        coef = tuple(x.astype(np.float32) for x in coef)
    return rot, coef


def duhamel(series: FieldSeries) -> FieldSeries:
    """Wave integral of a forcing series from zero initial data.

    Integrates ``y'' + bracket(n)**2 y = F`` per mode with ``y(0) = y'(0) = 0``
    using the exact kernel for forcing interpolated linearly between frames;
    the sampled frames of ``y`` are returned on the same time grid.  The rule
    is exact for forcing linear in time and second-order accurate otherwise.
    """
    series = _as_series(series)
    lat = series.lattice
    dt = series.dt()
    (c, s_over_w, minus_ws), (a_y, b_y, a_v, b_v) = _filon_coefficients(
        lat.brackets, dt
    )
    y = np.zeros(lat.size, dtype=np.complex128)
    yd = np.zeros(lat.size, dtype=np.complex128)
    out = np.zeros_like(series.frames)
    F = series.frames
    for k in range(len(series) - 1):
        dF = F[k + 1] - F[k]
        y, yd = (
            c * y + s_over_w * yd + a_y * F[k] + b_y * dF,
            minus_ws * y + c * yd + a_v * F[k] + b_v * dF,
        )
        out[k + 1] = y
    return series.with_frames(out)


@dataclass(frozen=True)
class WickSymbolSet:
    """Named collection of the constructed object family for one realization."""

    alpha: float
    series: dict

    def __getitem__(self, name: str) -> FieldSeries:
        return self.series[name]

    def __contains__(self, name: str) -> bool:
        return name in self.series

    def names(self):
        return tuple(self.series.keys())


def build_symbol_set(
    path: NoisePath,
    alpha: float,
    names=SYMBOL_NAMES,
) -> WickSymbolSet:
    """Construct the requested objects for one noise realization.

    Later entries depend on earlier ones, so requesting any name builds its
    prerequisites as well; only the requested names are returned.
    """
    names = tuple(names)
    unknown = set(names) - set(SYMBOL_NAMES)
    if unknown:
        raise ValueError(f"unknown symbol names: {sorted(unknown)}")
    lat = path.lattice
    grid = path.grid
    plan2 = GridPlan(lat, product_grid(2, lat.cutoff))
    plan3 = GridPlan(lat, product_grid(3, lat.cutoff))
    sig = sigma_curve(lat.cutoff, grid.times, alpha)
    built: dict[str, FieldSeries] = {}

    built["linear"] = linear_evolution(path, alpha, store="all")
    u = built["linear"].frames

    def product_series(frames_list, plan):
        out = np.zeros_like(frames_list[0])
        for k in range(out.shape[0]):
            out[k] = plan.multiply(*[fr[k] for fr in frames_list])
        return out

    zero_idx = lat.index_of((0, 0))
    need = set(names)
    if {"square", "quintic", "quintic_int"} & need:
        sq = product_series([u, u], plan2)
        sq[:, zero_idx] -= sig
        built["square"] = built["linear"].with_frames(sq)
    if {"cube", "cube_int", "quartic", "quintic", "quintic_int", "septic_int", "nonic_int"} & need:
        cu = product_series([u, u, u], plan3)
        cu -= 3.0 * sig[:, None] * u
        built["cube"] = built["linear"].with_frames(cu)
        built["cube_int"] = duhamel(built["cube"])
    w = built.get("cube_int")
    if "quartic" in need:
        built["quartic"] = built["linear"].with_frames(
            product_series([u, w.frames], plan2)
        )
    if {"quintic", "quintic_int"} & need:
        qu = product_series([built["square"].frames, w.frames], plan2)
        built["quintic"] = built["linear"].with_frames(qu)
        built["quintic_int"] = duhamel(built["quintic"])
    if "septic_int" in need:
        sep = product_series([u, w.frames, w.frames], plan3)
        built["septic_int"] = duhamel(built["linear"].with_frames(sep))
    if "nonic_int" in need:
        non = product_series([w.frames, w.frames, w.frames], plan3)
        built["nonic_int"] = duhamel(built["linear"].with_frames(non))
    return WickSymbolSet(alpha=alpha, series={n: built[n] for n in names})


# ----------------------------------------------------------------------------
# ensemble mean-square dyadic profiles (throughput path)
# ----------------------------------------------------------------------------


def _block_weight_squares(lattice: TruncatedLattice, levels: int, kind: str):
    from .lattice import lp_weights

    return np.array(
        [lp_weights(lattice, j, kind=kind) ** 2 for j in range(levels)]
    )


def _one_shot_samples(cutoff, alpha, time, realization, seed):
    """Draw the linear field at a single time with its exact marginal law."""
    lat = TruncatedLattice(cutoff)
    z1, z2 = draw_hermitian_normals(cutoff, seed, realization, 0, _STREAM_PV, 2)
    P, _ = exact_convolution_increment(lat.brackets, time, alpha, (z1, z2))
    return lat, P


def ensemble_profile(
    symbol: str,
    cutoff: int,
    alpha: float,
    time: float,
    realizations: int,
    seed: int,
    dt: float | None = None,
    trusted_cap: int | None = None,
    kind: str = "smooth",
):
    """Ensemble mean of squared dyadic-block masses for one object at one time.

    Returns ``(levels, mean_square_mass)`` where entry j is the ensemble
    average of ``sum_n w_j(n)**2 |coeff(n)|**2`` for the chosen block family.
    The linear field and its renormalized square are sampled exactly at the
    target time in a single shot per realization; the integrated cube is
    marched with the exact-kernel recursion in single precision on a reduced
    grid.  For the marched object the grid keeps modes up to ``trusted_cap``
    (default: half the cutoff) free of wrap-around contamination and only
    the levels supported there are returned.
    """
    cutoff = int(cutoff)
    lat = TruncatedLattice(cutoff)
    from .lattice import j_max

    jm = j_max(cutoff)
    if symbol in ("linear", "square"):
        levels = jm + 1
        wsq = _block_weight_squares(lat, levels, kind)
        acc = np.zeros(lat.size)
        plan2 = (
            GridPlan(lat, product_grid(2, cutoff)) if symbol == "square" else None
        )
        zero_idx = lat.index_of((0, 0))
        sig = float(sigma_curve(cutoff, time, alpha)) if symbol == "square" else 0.0
        for r in range(realizations):
            _, P = _one_shot_samples(cutoff, alpha, time, r, seed)
            if symbol == "linear":
                acc += np.abs(P) ** 2
            else:
                sq = plan2.multiply(P, P)
                sq[zero_idx] -= sig
                acc += np.abs(sq) ** 2
        acc /= realizations
        return np.arange(levels), wsq @ acc
    if symbol == "cube_int":
        if dt is None:
            dt = 1.0 / 128.0
        if trusted_cap is None:
            trusted_cap = max(cutoff // 2, 2)
        nsteps = int(round(time / dt))
        if abs(nsteps * dt - time) > 1e-12:
            raise ValueError("time must be a multiple of dt")
        if trusted_cap < cutoff:
            G = product_grid(3, cutoff, cap=trusted_cap)
            levels = j_max(trusted_cap) + 1
        else:
            G = product_grid(3, cutoff)
            levels = jm + 1
        acc = _marched_cube_int_mean_square(
            lat, alpha, dt, nsteps, realizations, seed, G
        )
        wsq = _block_weight_squares(lat, levels, kind)
        return np.arange(levels), wsq @ acc
    raise ValueError(
        "ensemble_profile supports 'linear', 'square', and 'cube_int'"
    )


def _marched_cube_int_mean_square(
    lat: TruncatedLattice,
    alpha: float,
    dt: float,
    nsteps: int,
    realizations: int,
    seed: int,
    gridsize: int,
):
    """Mean squared coefficients of the integrated renormalized cube.

    Single-precision pipeline: exact one-step noise updates for the linear
    field, pointwise cube on the dealiased grid every step, and the
    exact-kernel forced update for the running integral.
    """
    w = lat.brackets
    plan = GridPlan(lat, gridsize, dtype=np.float32)
    (c, s_over_w, minus_ws), (a_y, b_y, a_v, b_v) = _filon_coefficients(
        w, dt, dtype=np.float32
    )
    from .noise import convolution_cholesky

    l11, l21, l22 = (
        x.astype(np.float32) for x in convolution_cholesky(w, dt, alpha)
    )
    times = np.arange(nsteps + 1) * dt
    sig = sigma_curve(lat.cutoff, times, alpha).astype(np.float32)
    acc = np.zeros(lat.size, dtype=np.float64)
    M = lat.size
    for r in range(realizations):
        u = np.zeros(M, dtype=np.complex64)
        v = np.zeros(M, dtype=np.complex64)
        y = np.zeros(M, dtype=np.complex64)
        yd = np.zeros(M, dtype=np.complex64)
        F_prev = np.zeros(M, dtype=np.complex64)
        for k in range(nsteps):
            z1, z2 = draw_hermitian_normals(
                lat.cutoff, seed, r, k, _STREAM_PV, 2, dtype=np.complex64
            )
            u, v = (
                c * u + s_over_w * v + l11 * z1,
                minus_ws * u + c * v + l21 * z1 + l22 * z2,
            )
            g = plan.to_grid(u)
            F = plan.from_grid(g * g * g)
            F -= (3.0 * sig[k + 1]) * u
            dF = F - F_prev
            y, yd = (
                c * y + s_over_w * yd + a_y * F_prev + b_y * dF,
                minus_ws * y + c * yd + a_v * F_prev + b_v * dF,
            )
            F_prev = F
        acc += (np.abs(y) ** 2).astype(np.float64)
    acc /= realizations
    return acc
