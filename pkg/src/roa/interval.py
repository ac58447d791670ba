"""Interval and box types plus vectorized interval kernels.

Every kernel takes lower/upper endpoint arrays (any broadcastable shape) and
returns a new ``(lo, hi)`` pair.  Results are widened outward by a few ulps
after each primitive so that floating-point rounding never shrinks an
enclosure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ULPS = 4
TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def subset_of(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def __iter__(self):
        yield self.lo
        yield self.hi


class Box(tuple):
    """Axis-aligned box: an immutable tuple of :class:`Interval`."""

    def __new__(cls, intervals: Iterable):
        items = []
        for iv in intervals:
            if not isinstance(iv, Interval):
                lo, hi = iv
                iv = Interval(float(lo), float(hi))
            items.append(iv)
        if not items:
            raise ValueError("a box needs at least one dimension")
        return super().__new__(cls, items)

    @property
    def dim(self) -> int:
        return len(self)

    @property
    def lo(self) -> np.ndarray:
        return np.array([iv.lo for iv in self])

    @property
    def hi(self) -> np.ndarray:
        return np.array([iv.hi for iv in self])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, x: Sequence[float]) -> bool:
        return all(iv.lo <= xi <= iv.hi for iv, xi in zip(self, x))

    def subset_of(self, other: "Box") -> bool:
        return all(a.subset_of(b) for a, b in zip(self, other))

    def contains_strictly(self, x: Sequence[float]) -> bool:
        return all(iv.lo < xi < iv.hi for iv, xi in zip(self, x))

    def scaled(self, factor: float) -> "Box":
        return Box((iv.lo * factor, iv.hi * factor) for iv in self)

    def shifted(self, offset: Sequence[float]) -> "Box":
        return Box((iv.lo + o, iv.hi + o) for iv, o in zip(self, offset))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def to_list(self) -> list:
        return [[iv.lo, iv.hi] for iv in self]

    @classmethod
    def from_arrays(cls, lo, hi) -> "Box":
        return cls(zip(np.asarray(lo, float), np.asarray(hi, float)))

    @classmethod
    def cube(cls, half_width: float, dim: int) -> "Box":
        return cls([(-half_width, half_width)] * dim)

    def __repr__(self):
        return "Box(" + ", ".join(f"[{iv.lo:g}, {iv.hi:g}]" for iv in self) + ")"


# ---------------------------------------------------------------------------
# vectorized kernels
# ---------------------------------------------------------------------------


def widen(lo, hi, ulps: int = ULPS):
    """Move endpoints outward by ``ulps`` units in the last place.

    Exact zeros are left alone: IEEE sums and differences are exact when they
    vanish, the elementary functions used here only return 0 for an exact 0
    argument, and the operations that can underflow to 0 guard themselves
    with :func:`_underflow`.
    """
    with np.errstate(invalid="ignore"):
        lo_w = lo - ulps * np.abs(np.spacing(lo))
        hi_w = hi + ulps * np.abs(np.spacing(hi))
    lo_w = np.where(np.isfinite(lo) & (lo != 0), lo_w, lo)
    hi_w = np.where(np.isfinite(hi) & (hi != 0), hi_w, hi)
    return lo_w, hi_w


_TINY = 5e-324


def _underflow(lo, hi, maybe):
    """Widen zero endpoints where ``maybe`` says a nonzero result could have
    rounded to zero."""
    lo = np.where(maybe & (lo == 0), -_TINY, lo)
    hi = np.where(maybe & (hi == 0), _TINY, hi)
    return lo, hi


def iadd(al, ah, bl, bh):
    return widen(al + bl, ah + bh)


def isub(al, ah, bl, bh):
    return widen(al - bh, ah - bl)


def ineg(al, ah):
    return -ah, -al


def _nan_to_zero(x):
    # 0 * inf only arises for degenerate zero intervals; the product is 0.
    return np.where(np.isnan(x), 0.0, x)


def imul(al, ah, bl, bh):
    with np.errstate(invalid="ignore"):
        p1 = _nan_to_zero(al * bl)
        p2 = _nan_to_zero(al * bh)
        p3 = _nan_to_zero(ah * bl)
        p4 = _nan_to_zero(ah * bh)
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    lo, hi = widen(lo, hi)
    nonzero = ~((al == 0) & (ah == 0)) & ~((bl == 0) & (bh == 0))
    return _underflow(lo, hi, nonzero)


def iscale(c: float, al, ah):
    if c == 0:
        z = np.zeros_like(al)
        return z, z.copy()
    if c > 0:
        lo, hi = widen(c * al, c * ah)
    else:
        lo, hi = widen(c * ah, c * al)
    if abs(c) < 1.0:
        lo, hi = _underflow(lo, hi, ~((al == 0) & (ah == 0)))
    return lo, hi


def idiv(al, ah, bl, bh):
    """Quotient; entries whose divisor straddles zero come back as [-inf, inf]."""
    bad = (bl <= 0.0) & (bh >= 0.0)
    safe_bl = np.where(bad, 1.0, bl)
    safe_bh = np.where(bad, 1.0, bh)
    with np.errstate(over="ignore", invalid="ignore"):
        rl, rh = imul(al, ah, 1.0 / safe_bh, 1.0 / safe_bl)
    # the reciprocal itself is rounded, so widen once more
    rl, rh = widen(rl, rh)
    rl, rh = _underflow(rl, rh, ~((al == 0) & (ah == 0)))
    rl = np.where(bad, -np.inf, rl)
    rh = np.where(bad, np.inf, rh)
    return rl, rh


def ipow(al, ah, k: int):
    if k == 0:
        return np.ones_like(al), np.ones_like(ah)
    if k == 1:
        return al, ah
    with np.errstate(over="ignore"):
        pl = al**k
        ph = ah**k
    nonzero = ~((al == 0) & (ah == 0))
    if k % 2 == 1:
        return _underflow(*widen(pl, ph), nonzero)
    lo = np.where(al >= 0, pl, np.where(ah <= 0, ph, 0.0))
    hi = np.where(al >= 0, ph, np.where(ah <= 0, pl, np.maximum(pl, ph)))
    lo, hi = widen(lo, hi)
    lo, hi = _underflow(lo, hi, nonzero)
    return np.maximum(lo, 0.0), hi


def isqrt(al, ah):
    bad = al < 0
    with np.errstate(invalid="ignore"):
        lo = np.sqrt(np.where(bad, 0.0, al))
        hi = np.sqrt(np.maximum(ah, 0.0))
    lo, hi = widen(lo, hi)
    lo = np.maximum(lo, 0.0)
    return np.where(bad, -np.inf, lo), np.where(bad, np.inf, hi)


def iexp(al, ah):
    with np.errstate(over="ignore"):
        lo, hi = widen(np.exp(al), np.exp(ah))
    return np.maximum(lo, 0.0), np.maximum(hi, _TINY)


def itanh(al, ah):
    lo, hi = widen(np.tanh(al), np.tanh(ah))
    return np.maximum(lo, -1.0), np.minimum(hi, 1.0)


def _contains_point(al, ah, phase):
    """True where some ``phase + 2*pi*k`` lies in ``[al, ah]`` (conservative)."""
    slack = 1e-12 * (1.0 + np.abs(al) + np.abs(ah))
    k = np.ceil((al - phase) / TWO_PI - slack)
    return phase + TWO_PI * k <= ah + slack


def _periodic(al, ah, fn, max_phase, min_phase):
    vl, vh = fn(al), fn(ah)
    lo = np.minimum(vl, vh)
    hi = np.maximum(vl, vh)
    lo, hi = widen(lo, hi)
    wide = (ah - al) >= TWO_PI
    has_max = wide | _contains_point(al, ah, max_phase)
    has_min = wide | _contains_point(al, ah, min_phase)
    hi = np.where(has_max, 1.0, np.minimum(hi, 1.0))
    lo = np.where(has_min, -1.0, np.maximum(lo, -1.0))
    return lo, hi


def isin(al, ah):
    return _periodic(al, ah, np.sin, HALF_PI, -HALF_PI)


def icos(al, ah):
    return _periodic(al, ah, np.cos, 0.0, math.pi)


def iabs(al, ah):
    lo = np.where(al >= 0, al, np.where(ah <= 0, -ah, 0.0))
    hi = np.maximum(np.abs(al), np.abs(ah))
    return lo, hi


def imin(al, ah, bl, bh):
    return np.minimum(al, bl), np.minimum(ah, bh)


def imax(al, ah, bl, bh):
    return np.maximum(al, bl), np.maximum(ah, bh)


def intersect(al, ah, bl, bh):
    return np.maximum(al, bl), np.minimum(ah, bh)
