"""Truncated frequency lattice on the two-dimensional torus.

The working index set is the Euclidean ball ``{n in Z^2 : |n| <= N}`` for a
cutoff ``N``.  Modes are stored in lexicographic order, and every field keeps
one complex coefficient per mode.  Real fields satisfy the conjugation rule
``coeff(-n) = conj(coeff(n))``; the lattice precomputes the permutation that
maps each mode to its negation so samplers and checks can enforce the rule in
vectorized form.

The module also provides the dyadic frequency decomposition used by the norm
and regression code: sharp annular shells and a smooth partition of unity
built from a standard bump-quotient cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "jbracket",
    "enumerate_ball",
    "TruncatedLattice",
    "DyadicScale",
    "j_max",
    "smooth_cutoff",
    "lp_weights",
    "lp_project",
]


def jbracket(n):
    """Japanese bracket ``sqrt(1 + |n|^2)`` of a vector or array of vectors.

    Accepts a single pair or an ``(..., 2)`` array; returns a float or an
    array of floats with the last axis contracted.
    """
    v = np.asarray(n, dtype=np.float64)
    out = np.sqrt(1.0 + np.sum(v * v, axis=-1))
    if out.ndim == 0:
        return float(out)
    return out


def enumerate_ball(cutoff: int) -> np.ndarray:
    """Integer modes with ``|n| <= cutoff`` in lexicographic order, shape (M, 2)."""
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    r = int(cutoff)
    g = np.arange(-r, r + 1, dtype=np.int64)
    n1, n2 = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([n1.ravel(), n2.ravel()], axis=1)
    keep = (pts[:, 0] ** 2 + pts[:, 1] ** 2) <= r * r
    return np.ascontiguousarray(pts[keep])


@lru_cache(maxsize=32)
def _cached_lattice_arrays(cutoff: int):
    modes = enumerate_ball(cutoff)
    brackets = jbracket(modes)
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(modes)}
    conj = np.array([index[(-int(a), -int(b))] for a, b in modes], dtype=np.int64)
    return modes, brackets, index, conj


@dataclass(frozen=True)
class TruncatedLattice:
    """Frequency ball of a given cutoff with precomputed mode data.

    Attributes
    ----------
    cutoff : int
        Euclidean radius of the retained ball.
    modes : (M, 2) int array
        Lexicographically ordered integer modes.
    brackets : (M,) float array
        ``sqrt(1 + |n|^2)`` per mode.
    conjugate_perm : (M,) int array
        Index permutation sending each mode to its negation.
    """

    cutoff: int
    modes: np.ndarray = field(init=False, repr=False, compare=False)
    brackets: np.ndarray = field(init=False, repr=False, compare=False)
    conjugate_perm: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError("cutoff must be nonnegative")
        modes, brackets, index, conj = _cached_lattice_arrays(int(self.cutoff))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "brackets", brackets)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "conjugate_perm", conj)

    @property
    def size(self) -> int:
        return self.modes.shape[0]

    def index_of(self, n) -> int:
        """Position of mode ``n`` in the storage order."""
        key = (int(n[0]), int(n[1]))
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"mode {key} is outside the ball of radius {self.cutoff}")

    def contains(self, n) -> bool:
        return (int(n[0]), int(n[1])) in self._index

    def is_hermitian(self, coeffs: np.ndarray, tol: float = 1e-12) -> bool:
        """Whether a coefficient vector represents a real field."""
        return bool(
            np.max(np.abs(coeffs - np.conj(coeffs[self.conjugate_perm]))) <= tol
        )

    def radial(self) -> np.ndarray:
        """Euclidean length |n| per mode."""
        return np.sqrt(np.sum(self.modes.astype(np.float64) ** 2, axis=1))


def j_max(cutoff: int) -> int:
    """Largest dyadic level j with ``2**(j+1) <= cutoff``."""
    if cutoff < 2:
        raise ValueError("cutoff must be at least 2 for a dyadic decomposition")
    j = 0
    while 2 ** (j + 2) <= cutoff:
        j += 1
    return j


@dataclass(frozen=True)
class DyadicScale:
    """One dyadic frequency block: level index and its weight profile kind."""

    level: int
    kind: str = "sharp"

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        if self.kind not in ("sharp", "smooth"):
            raise ValueError("kind must be 'sharp' or 'smooth'")


def _bump(x: np.ndarray) -> np.ndarray:
    """exp(-1/x) for x > 0, zero otherwise; smooth on the real line."""
    out = np.zeros_like(x, dtype=np.float64)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_cutoff(r) -> np.ndarray:
    """Smooth radial cutoff equal to 1 for r <= 1 and 0 for r >= 2.

    Built as ``g(2 - r) / (g(2 - r) + g(r - 1))`` with the standard bump
    ``g(x) = exp(-1/x)`` for positive x; the quotient is smooth and
    monotonically decreasing on [1, 2].
    """
    r = np.asarray(r, dtype=np.float64)
    num = _bump(2.0 - r)
    den = num + _bump(r - 1.0)
    return num / den


def lp_weights(lattice: TruncatedLattice, level: int, kind: str = "sharp") -> np.ndarray:
    """Per-mode weight of one dyadic block.

    Three block families are supported:

    - ``sharp``: indicator of the closed annulus
      ``2**(level-1) <= |n| <= 2**(level+1)``.  Adjacent levels overlap, so
      summing sharp blocks overcounts; the zero mode belongs to no sharp
      annulus.
    - ``smooth``: partition-of-unity bumps.  Level 0 is ``chi(|n|)`` and
      level j >= 1 is ``chi(|n| / 2**j) - chi(|n| / 2**(j-1))``, supported
      in the same annulus as the sharp block; summed over levels they
      reproduce 1 on any fixed ball once enough levels are included.
    - ``shell``: disjointified refinement ``|n| <= 1`` (level 0) and
      ``2**(level-1) < |n| <= 2**level`` (level >= 1); these partition the
      ball exactly and give block orthogonality.
    """
    r = lattice.radial()
    if kind == "sharp":
        lo, hi = 2.0 ** (level - 1), 2.0 ** (level + 1)
        return ((r >= lo) & (r <= hi)).astype(np.float64)
    if kind == "smooth":
        if level == 0:
            return smooth_cutoff(r)
        return smooth_cutoff(r / 2.0**level) - smooth_cutoff(r / 2.0 ** (level - 1))
    if kind == "shell":
        if level == 0:
            return (r <= 1.0).astype(np.float64)
        lo, hi = 2.0 ** (level - 1), 2.0**level
        return ((r > lo) & (r <= hi)).astype(np.float64)
    raise ValueError("kind must be 'sharp', 'smooth', or 'shell'")


def lp_project(field_obj, level: int, kind: str = "sharp"):
    """Restrict a spectral field to one dyadic block (returns a new field)."""
    w = lp_weights(field_obj.lattice, level, kind)
    return field_obj.with_coeffs(field_obj.coeffs * w)
