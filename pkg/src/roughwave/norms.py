"""Discrete norms, regularity estimation, and empirical operator bounds.

Provides Sobolev and Besov-sup norms of lattice fields, a windowed
space-time norm for time series of fields, dyadic-block profile regression
for slope (regularity) estimation, exact rational checks of wave
admissibility of Lebesgue pairs, empirical trilinear-inequality ratios, and
a power-iteration estimate of the operator norm of multiplication by a
rough field composed with the wave integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .fields import FieldSeries, GridPlan, SpectralField, five_smooth, product_grid
from .lattice import TruncatedLattice, j_max, lp_weights, smooth_cutoff
from .symbols import duhamel, ensemble_profile

__all__ = [
    "hs_norm",
    "besov_inf_norm",
    "DyadicProfile",
    "RegressionFit",
    "dyadic_profile",
    "fit_profile",
    "regularity_slope",
    "ensemble_slope",
    "target_regularity",
    "tilde_target_regularity",
    "is_wave_admissible",
    "XsbParams",
    "xsb_norm",
    "trilinear_ratio",
    "operator_norm_J2",
]


# ----------------------------------------------------------------------------
# static norms
# ----------------------------------------------------------------------------


def hs_norm(f: SpectralField, s: float) -> float:
    """Sobolev norm: ``(sum_n bracket(n)**(2s) |coeff(n)|**2)**0.5``."""
    w = f.lattice.brackets
    return float(np.sqrt(np.sum(w ** (2.0 * s) * np.abs(f.coeffs) ** 2)))


def besov_inf_norm(f: SpectralField, s: float, oversample: int = 4) -> float:
    """Sup-type Besov norm: ``sup_j 2**(j*s) * max_x |block_j(f)(x)|``.

    Blocks use the smooth partition bumps; the max runs over an oversampled
    physical grid (band-limited fields vary slowly between nodes, so a few-
    fold oversampling pins the sup to high accuracy).
    """
    lat = f.lattice
    N = lat.cutoff
    G = five_smooth(max(oversample * N, 2 * N + 1, 8))
    plan = GridPlan(lat, G)
    top = _top_level(N)
    best = 0.0
    for j in range(top + 1):
        w = lp_weights(lat, j, kind="smooth")
        if not np.any(w):
            continue
        g = plan.to_grid(f.coeffs * w)
        best = max(best, 2.0 ** (j * s) * float(np.max(np.abs(g))))
    return best


def _top_level(cutoff: int) -> int:
    """Largest level whose smooth bump meets the mode ball."""
    j = 0
    while 2 ** (j - 1) <= cutoff:
        j += 1
    return j


# ----------------------------------------------------------------------------
# dyadic profiles and slope regression
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class DyadicProfile:
    """Ensemble-averaged dyadic block magnitudes, one value per level."""

    levels: np.ndarray
    values: np.ndarray
    cutoff: int
    base: str = "l2"
    kind: str = "smooth"
    realizations: int = 1

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.int64)
        va = np.asarray(self.values, dtype=np.float64)
        if lv.shape != va.shape:
            raise ValueError("levels and values must align")
        if np.any(va < 0):
            raise ValueError("block magnitudes must be nonnegative")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "values", va)

    def with_values(self, values) -> "DyadicProfile":
        return replace(self, values=np.asarray(values, dtype=np.float64))


@dataclass(frozen=True)
class RegressionFit:
    """Least-squares line through log2(block magnitude) against level."""

    slope: float
    intercept: float
    r_squared: float
    stderr: float


def dyadic_profile(
    fields,
    base: str = "l2",
    kind: str = "smooth",
    oversample: int = 4,
) -> DyadicProfile:
    """Ensemble-RMS block magnitudes of one or more same-lattice fields."""
    if isinstance(fields, SpectralField):
        fields = [fields]
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one field")
    lat = fields[0].lattice
    for f in fields:
        if f.lattice.cutoff != lat.cutoff:
            raise ValueError("all fields must share one lattice")
    jm = j_max(lat.cutoff)
    levels = np.arange(jm + 1)
    if base == "l2":
        acc = np.zeros(lat.size)
        for f in fields:
            acc += np.abs(f.coeffs) ** 2
        acc /= len(fields)
        vals = np.array(
            [
                np.sqrt(np.sum(lp_weights(lat, j, kind=kind) ** 2 * acc))
                for j in levels
            ]
        )
    elif base == "linf":
        G = five_smooth(max(oversample * lat.cutoff, 8))
        plan = GridPlan(lat, G)
        sq = np.zeros(levels.shape[0])
        for f in fields:
            for j in levels:
                w = lp_weights(lat, j, kind=kind)
                g = plan.to_grid(f.coeffs * w)
                sq[j] += float(np.max(np.abs(g))) ** 2
        vals = np.sqrt(sq / len(fields))
    else:
        raise ValueError("base must be 'l2' or 'linf'")
    return DyadicProfile(
        levels=levels,
        values=vals,
        cutoff=lat.cutoff,
        base=base,
        kind=kind,
        realizations=len(fields),
    )


def fit_profile(
    profile: DyadicProfile, j_lo: int = 2, j_hi: int | None = None
) -> RegressionFit:
    """Ordinary least squares of log2(magnitude) against level.

    The default window drops the two lowest levels (they mix the zero mode)
    and every level at or above the lattice's top usable level (the cutoff
    truncates those annuli).
    """
    if j_hi is None:
        j_hi = j_max(profile.cutoff) - 1
    sel = (profile.levels >= j_lo) & (profile.levels <= j_hi)
    x = profile.levels[sel].astype(np.float64)
    y = profile.values[sel]
    if x.shape[0] < 3:
        raise ValueError(
            f"too few dyadic levels in fit window [{j_lo}, {j_hi}]: {x.shape[0]}"
        )
    if np.any(y <= 0):
        raise ValueError("block magnitudes must be positive inside the fit window")
    ly = np.log2(y)
    n = x.shape[0]
    xm, ym = x.mean(), ly.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = ly - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ym) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    stderr = (
        math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    )
    return RegressionFit(slope=slope, intercept=intercept, r_squared=r2, stderr=stderr)


def regularity_slope(
    fields,
    base: str = "l2",
    kind: str = "smooth",
    j_lo: int = 2,
    j_hi: int | None = None,
):
    """Dyadic profile of an ensemble together with its fitted slope."""
    prof = dyadic_profile(fields, base=base, kind=kind)
    if prof.levels.shape[0] < 4:
        raise ValueError("need at least 4 usable dyadic levels")
    return prof, fit_profile(prof, j_lo=j_lo, j_hi=j_hi)


def ensemble_slope(
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
    """Profile and slope of one constructed object over a fresh ensemble.

    Wraps the throughput sampling path: the object is sampled or marched per
    realization and only mean squared block masses are retained.
    """
    levels, meansq = ensemble_profile(
        symbol,
        cutoff,
        alpha,
        time,
        realizations,
        seed,
        dt=dt,
        trusted_cap=trusted_cap,
        kind=kind,
    )
    prof = DyadicProfile(
        levels=levels,
        values=np.sqrt(meansq),
        cutoff=cutoff,
        base="l2",
        kind=kind,
        realizations=realizations,
    )
    j_hi = min(j_max(cutoff) - 1, int(levels.max()))
    return prof, fit_profile(prof, j_hi=j_hi)


# ----------------------------------------------------------------------------
# regularity targets and admissibility
# ----------------------------------------------------------------------------


def target_regularity(alpha: float) -> float:
    """Best regularity exponent of the integrated renormalized cube.

    Piecewise in the forcing roughness: ``1 - 2*alpha`` below one quarter,
    ``5/4 - 3*alpha`` from one quarter up to five twelfths; the branches
    agree at the break.
    """
    if not 0.0 <= alpha < 5.0 / 12.0:
        raise ValueError("alpha must lie in [0, 5/12)")
    if alpha < 0.25:
        return 1.0 - 2.0 * alpha
    return 1.25 - 3.0 * alpha


def tilde_target_regularity(alpha: float) -> float:
    """Auxiliary regularity exponent used by the resonant sum bounds.

    Equal to 1 below one quarter and ``3/2 - 2*alpha`` from one quarter
    up to one half.
    """
    if not 0.0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 1/2)")
    if alpha < 0.25:
        return 1.0
    return 1.5 - 2.0 * alpha


def _inverse_as_fraction(x) -> Fraction:
    """1/x as an exact fraction, with 1/inf = 0."""
    if x == math.inf:
        return Fraction(0)
    return 1 / Fraction(x)


def is_wave_admissible(q, r, s) -> bool:
    """Exact check of the scaling identity and the admissibility inequality.

    The pair (q, r) with regularity s must satisfy
    ``1/q + 2/r == 1 - s`` and ``2/q + 1/r <= 1/2``.  Arithmetic is exact
    over rationals; pass ``Fraction`` values (or floats that are exact
    binary fractions) for exact results, and ``math.inf`` for an infinite
    exponent.
    """
    if (q != math.inf and q < 2) or r < 2 or r == math.inf:
        raise ValueError("require q in [2, inf], r in [2, inf)")
    iq = _inverse_as_fraction(q)
    ir = _inverse_as_fraction(r)
    s = Fraction(s)
    scaling = iq + 2 * ir == 1 - s
    admissible = 2 * iq + ir <= Fraction(1, 2)
    return bool(scaling and admissible)


# ----------------------------------------------------------------------------
# windowed space-time norm
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class XsbParams:
    """Exponents of the space-time norm: spatial weight s, modulation
    weight b, optional horizon override, and window family."""

    s: float
    b: float
    T: float | None = None
    window: str = "smooth"


def _extension_nodes(nframes: int, dt: float):
    """Even-periodic extension index map and window over four horizons.

    The series on [0, T] is reflected evenly through both endpoints, giving
    a 2T-periodic signal sampled on [-2T, 2T); the window equals 1 on
    [0, T], falls smoothly, and vanishes before the edges of that range.
    """
    K = nframes - 1
    if K < 2:
        raise ValueError("need at least 3 frames for the space-time norm")
    T = K * dt
    L = 4 * K
    i = np.arange(L)
    pos = (i - 2 * K) % (2 * K)
    src = np.where(pos <= K, pos, 2 * K - pos)
    t = (i - 2 * K) * dt
    beyond = np.maximum(0.0, np.abs(t - 0.5 * T) - 0.5 * T)
    eta = smooth_cutoff(1.0 + beyond / (0.875 * T))
    lam = 2.0 * np.pi * np.fft.fftfreq(L, d=dt)
    return src, eta, lam, T, L


def _xsb_weight(brackets: np.ndarray, lam: np.ndarray, s: float, b: float):
    mod = 1.0 + (np.abs(lam)[:, None] - brackets[None, :]) ** 2
    return (brackets ** (2.0 * s))[None, :] * mod**b


def xsb_norm(series: FieldSeries, params: XsbParams) -> float:
    """Windowed space-time norm of a field series.

    The series is extended by even reflection, multiplied by the smooth
    window, Fourier transformed in time, and accumulated against the weight
    ``bracket(n)**(2s) * (1 + (|lambda| - bracket(n))**2)**b``.  A fixed
    normalization (consistent across all uses) makes values comparable
    between runs but not meaningful in absolute terms.
    """
    dt = series.dt()
    src, eta, lam, T, L = _extension_nodes(len(series), dt)
    ext = series.frames[src] * eta[:, None]
    spec = np.fft.fft(ext, axis=0) * dt
    w = _xsb_weight(series.lattice.brackets, lam, params.s, params.b)
    total = float(np.sum(w * (spec.real**2 + spec.imag**2)))
    return math.sqrt(total / (4.0 * T))


# ----------------------------------------------------------------------------
# empirical trilinear inequality ratios
# ----------------------------------------------------------------------------

#: Regimes of the product inequality: output exponents and, per argument,
#: either a space-time norm or a sup-in-time Besov norm on the first factor.
_TRILINEAR_REGIMES = ("tri1", "tri2", "tri3", "tri4")


def _regime_exponents(regime: str, alpha: float, eps: float, delta: float):
    if regime in ("tri1", "tri2"):
        out = (-0.75 + eps, -0.5 + delta)
        sin = 0.25 + eps
        besov_s = -alpha - eps
    elif regime in ("tri3", "tri4"):
        out = (2.0 * alpha - 0.25 + eps - 1.0, -0.5 + delta)
        sin = 2.0 * alpha - 0.25 + eps
        besov_s = -alpha - 0.5 * eps
    else:
        raise ValueError(f"unknown regime {regime!r}")
    first_besov = regime in ("tri1", "tri3")
    return out, sin, besov_s, first_besov


def default_trilinear_margins(regime: str, alpha: float):
    """A valid (eps, delta) pair strictly inside the regime's admissible set."""
    if regime in ("tri1", "tri2"):
        eps_cap = min(1.0 / 12.0, 0.25 - alpha) if regime == "tri1" else 1.0 / 12.0
        eps = 0.5 * eps_cap
        delta = eps / 3.0
    else:
        caps = [
            (3.0 - 8.0 * alpha) / 4.0,
            (5.0 - 8.0 * alpha) * (24.0 * alpha - 5.0) / (12.0 * (1.0 + 8.0 * alpha)),
        ]
        if regime == "tri4":
            caps = [(5.0 - 8.0 * alpha) ** 2 / (32.0 * (1.0 - alpha))]
        eps = 0.5 * min(c for c in caps if c > 0)
        delta = eps / (5.0 - 8.0 * alpha)
    return eps, delta


def trilinear_ratio(
    u: FieldSeries,
    v: FieldSeries,
    w: FieldSeries,
    regime: str,
    alpha: float,
    eps: float | None = None,
    delta: float | None = None,
) -> float:
    """Measured constant of one trilinear product inequality.

    Computes the windowed space-time norm of the pointwise triple product
    and divides by the corresponding product of right-hand-side norms for
    the requested regime.  Zero over zero is defined as zero; a vanishing
    right side with a nonvanishing left side raises.
    """
    if eps is None or delta is None:
        de, dd = default_trilinear_margins(regime, alpha)
        eps = de if eps is None else eps
        delta = dd if delta is None else delta
    (s_out, b_out), s_in, besov_s, first_besov = _regime_exponents(
        regime, alpha, eps, delta
    )
    lat = u.lattice
    if v.lattice.cutoff != lat.cutoff or w.lattice.cutoff != lat.cutoff:
        raise ValueError("fields must share one lattice")
    plan = GridPlan(lat, product_grid(3, lat.cutoff))
    prod = np.zeros_like(u.frames)
    for k in range(len(u)):
        prod[k] = plan.multiply(u.frames[k], v.frames[k], w.frames[k])
    lhs = xsb_norm(u.with_frames(prod), XsbParams(s=s_out, b=b_out))
    bplus = XsbParams(s=s_in, b=0.5 + delta)
    if first_besov:
        sup_b = max(
            besov_inf_norm(u[k], besov_s, oversample=2) for k in range(len(u))
        )
        rhs = sup_b * xsb_norm(v, bplus) * xsb_norm(w, bplus)
    else:
        rhs = xsb_norm(u, bplus) * xsb_norm(v, bplus) * xsb_norm(w, bplus)
    if rhs == 0.0:
        if lhs == 0.0:
            return 0.0
        raise ZeroDivisionError("vanishing right-hand side with nonzero product")
    return lhs / rhs


# ----------------------------------------------------------------------------
# operator norm of multiplication-then-integration
# ----------------------------------------------------------------------------


def _gram_apply(frames: np.ndarray, brackets, dt, s, b):
    """Apply the weighted-norm Gram operator to per-mode time vectors."""
    src, eta, lam, T, L = _extension_nodes(frames.shape[0], dt)
    ext = frames[src] * eta[:, None]
    spec = np.fft.fft(ext, axis=0)
    wgt = _xsb_weight(np.asarray(brackets, dtype=np.float64), lam, s, b)
    spec *= wgt
    back = np.fft.ifft(spec, axis=0)
    back *= eta[:, None]
    out = np.zeros_like(frames)
    np.add.at(out, src, back)
    return out


def _weighted_inner(a: np.ndarray, b_frames: np.ndarray, brackets, dt, s, b):
    ga = _gram_apply(b_frames, brackets, dt, s, b)
    return float(np.real(np.sum(np.conj(a) * ga)))


class _GramSolver:
    """Factorized inverse of the weighted-norm Gram operator.

    Modes sharing a bracket value share the same time-domain Gram matrix up
    to the scalar spatial weight, so each distinct bracket is factorized
    once (dense Cholesky of a small frames-by-frames matrix) and solves are
    batched per group.
    """

    def __init__(self, brackets, nframes: int, dt: float, s: float, b: float):
        import scipy.linalg as sla

        w = np.asarray(brackets, dtype=np.float64)
        self._uniq, self._inv = np.unique(w, return_inverse=True)
        self._s = s
        self._factors = []
        eye = np.eye(nframes, dtype=np.complex128)
        for wv in self._uniq:
            cols = _gram_apply(eye, np.full(nframes, wv), dt, 0.0, b)
            gram = 0.5 * (cols.real + cols.real.T)
            self._factors.append(sla.cho_factor(gram, lower=True))
        self._sla = sla

    def solve(self, frames: np.ndarray) -> np.ndarray:
        out = np.empty_like(frames)
        for g, wv in enumerate(self._uniq):
            sel = self._inv == g
            rhs = frames[:, sel] / wv ** (2.0 * self._s)
            out[:, sel] = self._sla.cho_solve(self._factors[g], rhs)
        return out


def operator_norm_J2(
    two: FieldSeries,
    s: float,
    b: float,
    iterations: int = 40,
    tol: float = 1e-6,
    seed: int = 0,
) -> float:
    """Largest singular value of "multiply by the field, then wave-integrate".

    The operator acts on series over the same grid; singular values are taken
    with respect to the windowed space-time inner product with exponents
    (s, b) on both sides.  Power iteration runs on the normal operator; on
    failure to settle within the budget a RuntimeError reports the last two
    Rayleigh quotients.
    """
    lat = two.lattice
    dt = two.dt()
    plan = GridPlan(lat, product_grid(2, lat.cutoff))
    w = lat.brackets

    def apply_A(z: np.ndarray) -> np.ndarray:
        mz = np.empty_like(z)
        for k in range(z.shape[0]):
            mz[k] = plan.multiply(two.frames[k], z[k])
        return duhamel(two.with_frames(mz)).frames

    def apply_At(z: np.ndarray) -> np.ndarray:
        jz = _duhamel_adjoint(two.with_frames(z)).frames
        out = np.empty_like(jz)
        for k in range(jz.shape[0]):
            out[k] = plan.multiply(two.frames[k], jz[k])
        return out

    rng = np.random.default_rng(seed)
    z = rng.standard_normal(two.frames.shape) + 1j * rng.standard_normal(
        two.frames.shape
    )
    solver = _GramSolver(w, len(two), dt, s, b)
    hist = []
    for _ in range(iterations):
        az = apply_A(z)
        num = _weighted_inner(az, az, w, dt, s, b)
        den = _weighted_inner(z, z, w, dt, s, b)
        if den == 0.0:
            return 0.0
        rho = math.sqrt(max(num, 0.0) / den)
        hist.append(rho)
        if len(hist) >= 2 and abs(hist[-1] - hist[-2]) <= tol * max(hist[-1], 1e-30):
            return hist[-1]
        gz = _gram_apply(az, w, dt, s, b)
        z = solver.solve(apply_At(gz))
        nz = math.sqrt(float(np.sum(np.abs(z) ** 2)))
        if nz == 0.0:
            return 0.0
        z /= nz
    raise RuntimeError(
        "power iteration did not settle: last Rayleigh quotients "
        f"{hist[-2]:.6g}, {hist[-1]:.6g}"
    )


def _duhamel_adjoint(series: FieldSeries) -> FieldSeries:
    """Adjoint (conjugate transpose over frames) of the wave integral."""
    from .symbols import _filon_coefficients

    lat = series.lattice
    dt = series.dt()
    (c, s_over_w, minus_ws), (a_y, b_y, a_v, b_v) = _filon_coefficients(
        lat.brackets, dt
    )
    K1 = len(series)
    F = series.frames
    out = np.zeros_like(F)
    # reverse sweep of the forward recursion's transpose: the forward map is
    #   state' = R state + B0 F_k + B1 F_{k+1};  output_{k+1} = first(state')
    # so cotangents flow backward through R^T while depositing on the forcing.
    sy = np.zeros(lat.size, dtype=np.complex128)
    sv = np.zeros(lat.size, dtype=np.complex128)
    for k in range(K1 - 2, -1, -1):
        sy = sy + F[k + 1]
        ny = c * sy + minus_ws * sv
        nv = s_over_w * sy + c * sv
        out[k] += (a_y - b_y) * sy + (a_v - b_v) * sv
        out[k + 1] += b_y * sy + b_v * sv
        sy, sv = ny, nv
    return series.with_frames(out)
