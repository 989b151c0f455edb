"""Outward-rounded interval arithmetic and axis-aligned boxes.

Every arithmetic operation widens its result by at least one ulp on each
side, so the returned interval encloses the exact real result of applying
the operation to any members of the operands.  IEEE-correctly-rounded
operations (+, -, *, /, sqrt) get one ulp; library transcendentals
(sin, cos, tanh), whose rounding error may exceed half an ulp, get two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping

_TWO_PI = 2.0 * math.pi
_HALF_PI = 0.5 * math.pi


class IntervalError(ValueError):
    """An interval operation left the domain of the operation (division by
    an interval containing zero, sqrt of a partly negative interval) or
    produced a non-finite bound."""


def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


def _down2(x: float) -> float:
    return _down(_down(x))


def _up2(x: float) -> float:
    return _up(_up(x))


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] with finite float endpoints."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise IntervalError(f"non-finite interval [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise IntervalError(f"inverted interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value: float) -> "Interval":
        return cls(value, value)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = 0.5 * self.lo + 0.5 * self.hi
        # Clamp in case of rounding at the extremes.
        return min(max(m, self.lo), self.hi)

    @property
    def mag(self) -> float:
        """Largest absolute value attained on the interval."""
        return max(abs(self.lo), abs(self.hi))

    def rel_width(self) -> float:
        """Width relative to the magnitude scale, floored at scale 1."""
        return self.width / max(1.0, self.mag)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"

    # -- arithmetic ---------------------------------------------------

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo + other.lo), _up(self.hi + other.hi))

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo - other.hi), _up(self.hi - other.lo))

    def __mul__(self, other: "Interval") -> "Interval":
        p1 = self.lo * other.lo
        p2 = self.lo * other.hi
        p3 = self.hi * other.lo
        p4 = self.hi * other.hi
        return Interval(_down(min(p1, p2, p3, p4)), _up(max(p1, p2, p3, p4)))

    def __truediv__(self, other: "Interval") -> "Interval":
        if other.lo <= 0.0 <= other.hi:
            raise IntervalError(f"division by interval {other} containing zero")
        q1 = self.lo / other.lo
        q2 = self.lo / other.hi
        q3 = self.hi / other.lo
        q4 = self.hi / other.hi
        return Interval(_down(min(q1, q2, q3, q4)), _up(max(q1, q2, q3, q4)))

    def abs(self) -> "Interval":
        if self.lo >= 0.0:
            return self
        if self.hi <= 0.0:
            return Interval(-self.hi, -self.lo)
        return Interval(0.0, max(-self.lo, self.hi))

    def sign(self) -> "Interval":
        lo = -1.0 if self.lo < 0.0 else (0.0 if self.lo == 0.0 else 1.0)
        hi = -1.0 if self.hi < 0.0 else (0.0 if self.hi == 0.0 else 1.0)
        return Interval(lo, hi)

    def ipow(self, n: int) -> "Interval":
        if n < 0:
            raise IntervalError(f"negative integer exponent {n}")
        if n == 0:
            return Interval(1.0, 1.0)
        if n == 1:
            return self
        if n % 2 == 1 or self.lo >= 0.0:
            return Interval(_down2(math.pow(self.lo, n)),
                            _up2(math.pow(self.hi, n)))
        if self.hi <= 0.0:
            return Interval(_down2(math.pow(self.hi, n)),
                            _up2(math.pow(self.lo, n)))
        # Even power over an interval straddling zero.
        return Interval(0.0, _up2(math.pow(self.mag, n)))

    def sqrt(self) -> "Interval":
        if self.lo < 0.0:
            raise IntervalError(f"sqrt of interval {self} containing negatives")
        return Interval(max(0.0, _down(math.sqrt(self.lo))),
                        _up(math.sqrt(self.hi)))

    def tanh(self) -> "Interval":
        return Interval(max(-1.0, _down2(math.tanh(self.lo))),
                        min(1.0, _up2(math.tanh(self.hi))))

    def sin(self) -> "Interval":
        return _sin_enclosure(self.lo, self.hi)

    def cos(self) -> "Interval":
        # cos(x) = sin(x + pi/2); shift conservatively outward.
        return _sin_enclosure(_down(self.lo + _HALF_PI), _up(self.hi + _HALF_PI))


def _contains_critical(lo: float, hi: float, offset: float) -> bool:
    """Whether offset + 2*pi*k lies in [lo, hi] for some integer k.

    Errs toward True: the test window is padded by a whisker so float pi
    cannot make an enclosure miss an extremum that is actually inside.
    """
    pad = 4.0 * math.ulp(max(abs(lo), abs(hi), 1.0))
    k_min = math.ceil((lo - offset - pad) / _TWO_PI)
    k_max = math.floor((hi - offset + pad) / _TWO_PI)
    return k_min <= k_max


def _sin_enclosure(lo: float, hi: float) -> Interval:
    if hi - lo >= _TWO_PI:
        return Interval(-1.0, 1.0)
    s_lo = math.sin(lo)
    s_hi = math.sin(hi)
    out_lo = min(s_lo, s_hi)
    out_hi = max(s_lo, s_hi)
    if _contains_critical(lo, hi, _HALF_PI):
        out_hi = 1.0
    else:
        out_hi = min(1.0, _up2(out_hi))
    if _contains_critical(lo, hi, -_HALF_PI):
        out_lo = -1.0
    else:
        out_lo = max(-1.0, _down2(out_lo))
    return Interval(out_lo, out_hi)


class Box:
    """One interval per feature; the rectangular domain of a problem.

    Feature order is canonicalized to sorted names so that midpoints,
    splits and coordinate vectors are deterministic regardless of how the
    box was assembled.
    """

    __slots__ = ("features", "intervals")

    def __init__(self, intervals: Mapping[str, Interval]):
        if not intervals:
            raise IntervalError("box must cover at least one feature")
        self.features: tuple[str, ...] = tuple(sorted(intervals))
        self.intervals: tuple[Interval, ...] = tuple(
            intervals[name] for name in self.features)

    @classmethod
    def from_bounds(cls, bounds: Mapping[str, tuple[float, float]]) -> "Box":
        return cls({name: Interval(lo, hi) for name, (lo, hi) in bounds.items()})

    def __getitem__(self, name: str) -> Interval:
        try:
            return self.intervals[self.features.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.features

    def __iter__(self) -> Iterator[str]:
        return iter(self.features)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Box)
                and self.features == other.features
                and self.intervals == other.intervals)

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}={iv!r}" for n, iv in zip(self.features, self.intervals))
        return f"Box({inner})"

    def midpoint(self) -> dict[str, float]:
        return {n: iv.mid for n, iv in zip(self.features, self.intervals)}

    def contains_point(self, point: Mapping[str, float]) -> bool:
        return all(self[n].contains(point[n]) for n in self.features)

    def widest_feature(self) -> str:
        """Feature with the largest relative width (ties: first in order)."""
        best = self.features[0]
        best_w = self.intervals[0].rel_width()
        for name, iv in zip(self.features[1:], self.intervals[1:]):
            w = iv.rel_width()
            if w > best_w:
                best, best_w = name, w
        return best

    def split(self, name: str) -> tuple["Box", "Box"]:
        iv = self[name]
        mid = iv.mid
        left = dict(zip(self.features, self.intervals))
        right = dict(left)
        left[name] = Interval(iv.lo, mid)
        right[name] = Interval(mid, iv.hi)
        return Box(left), Box(right)

    def max_rel_width(self) -> float:
        return max(iv.rel_width() for iv in self.intervals)
