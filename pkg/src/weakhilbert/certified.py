"""Midpoint-radius enclosures on top of MPFR directed rounding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import gmpy2
from gmpy2 import mpfr, mpq

DEFAULT_PRECISION = 128


def _ctx(prec: int, rnd):
    return gmpy2.context(precision=prec, round=rnd)


def down(x, prec: int):
    with _ctx(prec, gmpy2.RoundDown):
        return mpfr(x)


def up(x, prec: int):
    with _ctx(prec, gmpy2.RoundUp):
        return mpfr(x)


@dataclass(frozen=True)
class CertifiedValue:
    """The real number enclosed by ``[mid - rad, mid + rad]``."""

    mid: object
    rad: object
    prec: int = DEFAULT_PRECISION

    # constructors ----------------------------------------------------------

    @classmethod
    def exact(cls, q, prec: int = DEFAULT_PRECISION) -> "CertifiedValue":
        q = mpq(q)
        with _ctx(prec, gmpy2.RoundToNearest):
            m = mpfr(q)
        with _ctx(prec, gmpy2.RoundUp):
            r = mpfr(abs(mpq(m) - q))
        return cls(m, r, prec)

    @classmethod
    def from_bounds(cls, lo, hi, prec: int = DEFAULT_PRECISION) -> "CertifiedValue":
        if lo > hi:
            raise ValueError("empty enclosure")
        lo, hi = _down_val(lo, prec), _up_val(hi, prec)
        with _ctx(prec, gmpy2.RoundToNearest):
            m = (lo + hi) / 2
        with _ctx(prec, gmpy2.RoundUp):
            r = max(hi - m, m - lo)
        return cls(m, r, prec)

    @classmethod
    def from_float(cls, mid: float, rad: float, prec: int = DEFAULT_PRECISION):
        with _ctx(prec, gmpy2.RoundUp):
            return cls(mpfr(mid), mpfr(rad), prec)

    # views -----------------------------------------------------------------

    @property
    def lo(self):
        with _ctx(self.prec, gmpy2.RoundDown):
            return self.mid - self.rad

    @property
    def hi(self):
        with _ctx(self.prec, gmpy2.RoundUp):
            return self.mid + self.rad

    def __float__(self) -> float:
        return float(self.mid)

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def contains_zero(self) -> bool:
        return self.lo <= 0 <= self.hi

    def overlaps(self, other: "CertifiedValue", slack=0) -> bool:
        if not slack:
            return self.lo <= other.hi and other.lo <= self.hi
        prec = max(self.prec, other.prec)
        with _ctx(prec, gmpy2.RoundDown):
            a, b = self.lo - mpfr(slack), other.lo - mpfr(slack)
        return a <= other.hi and b <= self.hi

    def sign(self) -> int:
        """+1/-1 if the enclosure excludes zero, else 0."""
        if self.lo > 0:
            return 1
        if self.hi < 0:
            return -1
        return 0

    def abs_lo(self):
        """Certified lower bound of ``|value|``."""
        if self.contains_zero():
            return mpfr(0)
        with _ctx(self.prec, gmpy2.RoundDown):
            return min(abs(self.lo), abs(self.hi))

    def abs_hi(self):
        with _ctx(self.prec, gmpy2.RoundUp):
            return max(abs(self.lo), abs(self.hi))

    # arithmetic --------------------------------------------------------------

    def _err(self, m, prec):
        # half an ulp of the rounded midpoint, bounded generously
        with _ctx(prec, gmpy2.RoundUp):
            return abs(m) * mpfr(2) ** (1 - prec)

    def __add__(self, other):
        if not isinstance(other, CertifiedValue):
            other = CertifiedValue.exact(other, self.prec)
        prec = min(self.prec, other.prec)
        with _ctx(prec, gmpy2.RoundToNearest):
            m = self.mid + other.mid
        with _ctx(prec, gmpy2.RoundUp):
            r = self.rad + other.rad + self._err(m, prec)
        return CertifiedValue(m, r, prec)

    __radd__ = __add__

    def __neg__(self):
        with _ctx(self.prec, gmpy2.RoundToNearest):
            return CertifiedValue(-self.mid, self.rad, self.prec)

    def __sub__(self, other):
        return self + (-other if isinstance(other, CertifiedValue) else -mpq(other))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, q) -> "CertifiedValue":
        """Multiply by an exact rational."""
        q = mpq(q)
        prec = self.prec
        with _ctx(prec, gmpy2.RoundToNearest):
            m = self.mid * q
        with _ctx(prec, gmpy2.RoundUp):
            r = self.rad * mpfr(abs(q)) + self._err(m, prec)
        return CertifiedValue(m, r, prec)

    def __mul__(self, other):
        if not isinstance(other, CertifiedValue):
            return self.scale(other)
        prec = min(self.prec, other.prec)
        with _ctx(prec, gmpy2.RoundToNearest):
            m = self.mid * other.mid
        with _ctx(prec, gmpy2.RoundUp):
            r = (abs(self.mid) * other.rad + abs(other.mid) * self.rad
                 + self.rad * other.rad + self._err(m, prec))
        return CertifiedValue(m, r, prec)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"CertifiedValue({float(self.mid):.17g} +/- {float(self.rad):.3g})"


def csum(values: Iterable[CertifiedValue], prec: int = DEFAULT_PRECISION) -> CertifiedValue:
    total = CertifiedValue(mpfr(0), mpfr(0), prec)
    for v in values:
        total = total + v
    return total


def log_ratio(num, den, prec: int = DEFAULT_PRECISION) -> CertifiedValue:
    """Enclosure of ``ln(num / den)`` for positive integers or rationals."""
    if num <= 0 or den <= 0:
        raise ValueError("log of non-positive number")
    with _ctx(prec, gmpy2.RoundDown):
        lo = gmpy2.log(mpfr(num) / _up_val(den, prec))
    with _ctx(prec, gmpy2.RoundUp):
        hi = gmpy2.log(mpfr(num) / _down_val(den, prec))
    return CertifiedValue.from_bounds(lo, hi, prec)


def _up_val(x, prec):
    with _ctx(prec, gmpy2.RoundUp):
        return mpfr(x)


def _down_val(x, prec):
    with _ctx(prec, gmpy2.RoundDown):
        return mpfr(x)
