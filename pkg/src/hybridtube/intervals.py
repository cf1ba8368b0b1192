"""Closed-interval arithmetic for scalars, vectors, and matrices.

Scalars are `Interval` objects; a "box" is a plain list of `Interval`;
`IntervalMatrix` stores lower/upper bound arrays.  All primitive operations
round outward by a fixed number of machine ulps so that enclosures stay
sound under floating point.  Exact zero endpoints are preserved: an exact
zero can only arise from exact IEEE operations (0*x, x-x at endpoints), so
no rounding slack is required there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .errors import CornerExplosion

# Outward slack, in units of the last place, applied per primitive op.
OUT_ULPS = 4.0


def _down(v: float) -> float:
    if v == 0.0 or not math.isfinite(v):
        return v
    return v - OUT_ULPS * math.ulp(abs(v))


def _up(v: float) -> float:
    if v == 0.0 or not math.isfinite(v):
        return v
    return v + OUT_ULPS * math.ulp(abs(v))


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed real interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    # -- queries ---------------------------------------------------------
    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def rad(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def is_singleton(self) -> bool:
        return self.lo == self.hi

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def encloses(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    # -- arithmetic ------------------------------------------------------
    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)  # exact in IEEE

    def __add__(self, other) -> "Interval":
        o = as_interval(other)
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __sub__(self, other) -> "Interval":
        o = as_interval(other)
        return Interval(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __rsub__(self, other) -> "Interval":
        return as_interval(other) - self

    def __mul__(self, other) -> "Interval":
        o = as_interval(other)
        p1 = self.lo * o.lo
        p2 = self.lo * o.hi
        p3 = self.hi * o.lo
        p4 = self.hi * o.hi
        return Interval(_down(min(p1, p2, p3, p4)), _up(max(p1, p2, p3, p4)))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Interval":
        o = as_interval(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionError(f"interval division by [{o.lo}, {o.hi}]")
        q1 = self.lo / o.lo
        q2 = self.lo / o.hi
        q3 = self.hi / o.lo
        q4 = self.hi / o.hi
        return Interval(_down(min(q1, q2, q3, q4)), _up(max(q1, q2, q3, q4)))

    def __rtruediv__(self, other) -> "Interval":
        return as_interval(other) / self

    def __pow__(self, n) -> "Interval":
        if isinstance(n, float) and not n.is_integer():
            # real exponent: monotone on nonnegative bases only
            if self.lo < 0.0:
                raise ValueError(f"fractional power of {self} with negative part")
            if n > 0.0:
                return Interval(_down(self.lo**n), _up(self.hi**n))
            if self.lo == 0.0:
                raise ZeroDivisionError(f"negative power of {self} touching zero")
            return Interval(_down(self.hi**n), _up(self.lo**n))
        n = int(n)
        if n < 0:
            return as_interval(1.0) / self ** (-n)
        if n == 0:
            return Interval(1.0, 1.0)
        if n % 2 == 1 or self.lo >= 0.0:
            return Interval(_down(self.lo**n), _up(self.hi**n))
        if self.hi <= 0.0:
            return Interval(_down(self.hi**n), _up(self.lo**n))
        return Interval(0.0, _up(max(self.lo**n, self.hi**n)))

    def __abs__(self) -> "Interval":
        if self.lo >= 0.0:
            return self
        if self.hi <= 0.0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def __repr__(self) -> str:
        return f"[{self.lo:.17g}, {self.hi:.17g}]"


def as_interval(x) -> Interval:
    if isinstance(x, Interval):
        return x
    return Interval(float(x), float(x))


def iv_add(a, b) -> Interval:
    return as_interval(a) + b


def iv_mul(a, b) -> Interval:
    return as_interval(a) * b


def iv_neg(a) -> Interval:
    return -as_interval(a)


def iv_sqrt(x) -> Interval:
    """Square root; requires a nonnegative interval."""
    v = as_interval(x)
    if v.lo < 0.0:
        raise ValueError(f"sqrt of interval with negative part: {v}")
    lo = math.sqrt(v.lo)
    return Interval(_down(lo) if v.lo > 0.0 else 0.0, _up(math.sqrt(v.hi)))


def sqrt(x):
    """Dispatching sqrt usable from generated code (floats or intervals)."""
    if isinstance(x, Interval):
        return iv_sqrt(x)
    return math.sqrt(x)


# ---------------------------------------------------------------------------
# boxes: plain lists of Interval
# ---------------------------------------------------------------------------

def box(lo, hi) -> list[Interval]:
    """Box from per-axis bound arrays."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return [Interval(float(a), float(b)) for a, b in zip(lo, hi)]


def point_box(x) -> list[Interval]:
    return [Interval(float(v), float(v)) for v in np.asarray(x, dtype=float)]


def box_lo(bx: Sequence[Interval]) -> np.ndarray:
    return np.array([iv.lo for iv in bx])


def box_hi(bx: Sequence[Interval]) -> np.ndarray:
    return np.array([iv.hi for iv in bx])


def box_mid(bx: Sequence[Interval]) -> np.ndarray:
    return np.array([iv.mid for iv in bx])


def box_contains_point(bx: Sequence[Interval], x, tol: float = 0.0) -> bool:
    return all(iv.contains(float(v), tol) for iv, v in zip(bx, x))


def box_subset(inner: Sequence[Interval], outer: Sequence[Interval],
               tol: float = 0.0) -> bool:
    return all(o.encloses(i, tol) for i, o in zip(inner, outer))


# ---------------------------------------------------------------------------
# interval matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalMatrix:
    """Entrywise interval matrix stored as lower/upper bound arrays."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ValueError("bound arrays must share a 2-D shape")
        if np.any(lo > hi):
            raise ValueError("lower bounds exceed upper bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_point(cls, a) -> "IntervalMatrix":
        a = np.asarray(a, dtype=float)
        return cls(a.copy(), a.copy())

    @classmethod
    def from_intervals(cls, grid: Sequence[Sequence[Interval]]) -> "IntervalMatrix":
        lo = np.array([[iv.lo for iv in row] for row in grid])
        hi = np.array([[iv.hi for iv in row] for row in grid])
        return cls(lo, hi)

    @classmethod
    def from_columns(cls, cols: Sequence[Sequence[Interval]]) -> "IntervalMatrix":
        lo = np.array([[iv.lo for iv in col] for col in cols]).T
        hi = np.array([[iv.hi for iv in col] for col in cols]).T
        return cls(lo, hi)

    @property
    def shape(self) -> tuple[int, int]:
        return self.lo.shape

    def entry(self, i: int, j: int) -> Interval:
        return Interval(float(self.lo[i, j]), float(self.hi[i, j]))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def radius(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def contains_matrix(self, m, tol: float = 0.0) -> bool:
        m = np.asarray(m, dtype=float)
        return bool(np.all(self.lo - tol <= m) and np.all(m <= self.hi + tol))


def iv_matvec(mat: IntervalMatrix, vec: Sequence[Interval]) -> list[Interval]:
    """Componentwise enclosure of {M v : M in mat, v in vec}."""
    rows, cols = mat.shape
    if len(vec) != cols:
        raise ValueError(f"dimension mismatch: {mat.shape} @ {len(vec)}")
    out = []
    for i in range(rows):
        acc = Interval(0.0, 0.0)
        for j in range(cols):
            acc = acc + mat.entry(i, j) * vec[j]
        out.append(acc)
    return out


def corners(mat: IntervalMatrix, cap: int = 1 << 16) -> list[np.ndarray]:
    """Corner matrices of an interval matrix.

    Every matrix in `mat` lies in the convex hull of the returned list.
    Raises CornerExplosion when the non-singleton entry count k gives
    2**k > cap; callers then fall back to a center/radius bound.
    """
    free = np.argwhere(mat.hi > mat.lo)
    k = len(free)
    if k > 60 or (1 << k) > cap:
        raise CornerExplosion(
            f"{k} non-singleton entries -> 2^{k} corners exceeds cap {cap}")
    base = mat.lo.copy()
    out = []
    for pattern in product((False, True), repeat=k):
        m = base.copy()
        for take_hi, (i, j) in zip(pattern, free):
            if take_hi:
                m[i, j] = mat.hi[i, j]
        out.append(m)
    return out
