"""Outward-rounded interval arithmetic.

Enclosures are guaranteed to contain the true real range of every
operation; outward rounding is done by nudging results to the next
representable float after each primitive operation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

__all__ = ["Interval", "Box", "DomainError"]

# Outward-rounded enclosure of pi.
PI_LO = math.nextafter(math.pi, 0.0)
PI_HI = math.nextafter(math.pi, 4.0)
TWO_PI_LO = math.nextafter(2.0 * PI_LO, 0.0)
TWO_PI_HI = math.nextafter(2.0 * PI_HI, 8.0)


class DomainError(ValueError):
    """An interval operation left the domain of the function (log of a
    nonpositive interval, division by an interval containing zero, ...)."""


def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @staticmethod
    def point(x: float) -> "Interval":
        return Interval(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = 0.5 * self.lo + 0.5 * self.hi
        return m

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack

    def subset_of(self, other: "Interval", slack: float = 0.0) -> bool:
        return other.lo - slack <= self.lo and self.hi <= other.hi + slack

    def clamp(self, x: float) -> float:
        return min(max(x, self.lo), self.hi)

    def intersect(self, other: "Interval") -> "Interval":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            # Disjoint enclosures of the same quantity can only come from
            # rounding; collapse to the nearest common point.
            if lo - hi < 1e-9 * (1.0 + abs(lo)):
                lo = hi = 0.5 * (lo + hi)
            else:
                raise ValueError("empty intersection")
        return Interval(lo, hi)

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo + other.lo), _up(self.hi + other.hi))

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo - other.hi), _up(self.hi - other.lo))

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        ps = (self.lo * other.lo, self.lo * other.hi,
              self.hi * other.lo, self.hi * other.hi)
        return Interval(_down(min(ps)), _up(max(ps)))

    def scale(self, c: float) -> "Interval":
        if c >= 0:
            return Interval(_down(c * self.lo), _up(c * self.hi))
        return Interval(_down(c * self.hi), _up(c * self.lo))

    def shift(self, c: float) -> "Interval":
        return Interval(_down(self.lo + c), _up(self.hi + c))

    def __truediv__(self, other: "Interval") -> "Interval":
        if other.lo <= 0.0 <= other.hi:
            raise DomainError("division by an interval containing zero")
        ps = (self.lo / other.lo, self.lo / other.hi,
              self.hi / other.lo, self.hi / other.hi)
        return Interval(_down(min(ps)), _up(max(ps)))

    def pow_int(self, e: int) -> "Interval":
        if e < 0:
            raise ValueError("negative exponent; use division")
        if e == 0:
            return Interval(1.0, 1.0)
        lo_p, hi_p = self.lo ** e, self.hi ** e
        if e % 2 == 1:
            return Interval(_down(lo_p), _up(hi_p))
        hi = max(lo_p, hi_p)
        lo = 0.0 if self.lo <= 0.0 <= self.hi else min(lo_p, hi_p)
        return Interval(_down(lo) if lo != 0.0 else 0.0, _up(hi))

    # -- unary functions ----------------------------------------------------

    def sqrt(self) -> "Interval":
        if self.hi < 0.0:
            raise DomainError("sqrt of a negative interval")
        lo = 0.0 if self.lo <= 0.0 else _down(math.sqrt(self.lo))
        return Interval(max(lo, 0.0), _up(math.sqrt(self.hi)))

    def exp(self) -> "Interval":
        return Interval(_down(_down(math.exp(self.lo))), _up(_up(math.exp(self.hi))))

    def log(self) -> "Interval":
        if self.lo <= 0.0:
            raise DomainError("log of a nonpositive interval")
        return Interval(_down(_down(math.log(self.lo))), _up(_up(math.log(self.hi))))

    def atan(self) -> "Interval":
        return Interval(_down(math.atan(self.lo)), _up(math.atan(self.hi)))

    def abs(self) -> "Interval":
        if self.lo >= 0.0:
            return self
        if self.hi <= 0.0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def min_(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), min(self.hi, other.hi))

    def max_(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), max(self.hi, other.hi))

    def sin(self) -> "Interval":
        if self.width >= TWO_PI_HI:
            return Interval(-1.0, 1.0)
        hi = 1.0 if _contains_peak(self.lo, self.hi, 0.5) else \
            _up(_up(max(math.sin(self.lo), math.sin(self.hi))))
        lo = -1.0 if _contains_peak(self.lo, self.hi, -0.5) else \
            _down(_down(min(math.sin(self.lo), math.sin(self.hi))))
        return Interval(max(lo, -1.0), min(hi, 1.0))

    def cos(self) -> "Interval":
        if self.width >= TWO_PI_HI:
            return Interval(-1.0, 1.0)
        hi = 1.0 if _contains_peak(self.lo, self.hi, 0.0) else \
            _up(_up(max(math.cos(self.lo), math.cos(self.hi))))
        lo = -1.0 if _contains_peak(self.lo, self.hi, 1.0) else \
            _down(_down(min(math.cos(self.lo), math.cos(self.hi))))
        return Interval(max(lo, -1.0), min(hi, 1.0))


def _contains_peak(a: float, b: float, frac: float) -> bool:
    """Conservatively decide whether some point ``(frac + k) * pi`` with
    integer k lies in [a, b].  Used for the extrema of sin (frac=+-1/2)
    and cos (frac in {0, 1}).  Errs on the side of True."""
    # Peaks of one sign recur with period 2*pi: the candidate points are
    # (frac + 2k) * pi, so k must satisfy (a/pi - frac)/2 <= k <= (b/pi - frac)/2.
    lo_k = (a / (PI_HI if a >= 0 else PI_LO) - frac) / 2.0
    hi_k = (b / (PI_LO if b >= 0 else PI_HI) - frac) / 2.0
    slack = 1e-12 * (1.0 + abs(a) + abs(b))
    return math.floor(hi_k + slack) >= math.ceil(lo_k - slack)


class Box:
    """A product of intervals, one per variable."""

    def __init__(self, intervals: Iterable[Interval]):
        self.intervals = list(intervals)
        if not self.intervals:
            raise ValueError("empty box")

    @property
    def n(self) -> int:
        return len(self.intervals)

    def __getitem__(self, i: int) -> Interval:
        return self.intervals[i]

    def __iter__(self):
        return iter(self.intervals)

    def __eq__(self, other) -> bool:
        return isinstance(other, Box) and self.intervals == other.intervals

    def __repr__(self) -> str:
        parts = ", ".join(f"[{iv.lo:.6g}, {iv.hi:.6g}]" for iv in self.intervals)
        return f"Box({parts})"

    def widths(self) -> list:
        return [iv.width for iv in self.intervals]

    def max_width_coord(self) -> int:
        """Index of the widest interval; lowest index wins ties."""
        ws = self.widths()
        return ws.index(max(ws))

    def volume(self) -> float:
        v = 1.0
        for iv in self.intervals:
            v *= iv.width
        return v

    def contains(self, x, slack: float = 0.0) -> bool:
        return all(iv.contains(xi, slack) for iv, xi in zip(self.intervals, x))

    def midpoint(self) -> list:
        return [iv.mid for iv in self.intervals]

    def clamp(self, x) -> list:
        return [iv.clamp(xi) for iv, xi in zip(self.intervals, x)]

    def split(self, coord: int | None = None) -> tuple["Box", "Box"]:
        """Bisect along ``coord`` (default: the widest coordinate)."""
        if coord is None:
            coord = self.max_width_coord()
        iv = self.intervals[coord]
        mid = iv.mid
        left = list(self.intervals)
        right = list(self.intervals)
        left[coord] = Interval(iv.lo, mid)
        right[coord] = Interval(mid, iv.hi)
        return Box(left), Box(right)
