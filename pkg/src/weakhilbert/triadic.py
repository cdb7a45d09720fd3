"""Triadic intervals and the stage collections K_i, J_i.

All scalars are exact ``gmpy2.mpq`` rationals.  A triadic interval is the
half-open interval ``[n * 3**e, (n + 1) * 3**e)`` and is stored as the integer
pair ``(e, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

from gmpy2 import mpq, mpz

Rational = type(mpq(0))
RationalLike = Union[int, Fraction, str, "Rational"]

MAX_SCALE = 10**6


def Q(value: RationalLike, den: int = 1) -> Rational:
    """Coerce ints, Fractions, ``"p/q"`` strings or mpq to mpq."""
    if isinstance(value, Fraction):
        value = mpq(value.numerator, value.denominator)
    if den != 1:
        return mpq(value) / den
    return mpq(value)


def rational_str(x: Rational) -> str:
    x = mpq(x)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(text: str) -> Rational:
    text = text.strip()
    if "/" in text:
        p, q = text.split("/")
        if int(q) <= 0:
            raise ValueError(f"bad denominator in {text!r}")
        return mpq(int(p), int(q))
    return mpq(int(text))


def pow3(e: int) -> Rational:
    if abs(e) > MAX_SCALE:
        raise ValueError(f"scale {e} out of range")
    if e >= 0:
        return mpq(mpz(3) ** e)
    return mpq(1, mpz(3) ** (-e))


@dataclass(frozen=True, order=True)
class TriadicInterval:
    """``[index * 3**scale, (index + 1) * 3**scale)``."""

    scale: int
    index: int

    def __post_init__(self):
        if abs(self.scale) > MAX_SCALE:
            raise ValueError(f"scale {self.scale} out of range")

    @property
    def length(self) -> Rational:
        return pow3(self.scale)

    @property
    def left(self) -> Rational:
        return self.index * pow3(self.scale)

    @property
    def right(self) -> Rational:
        return (self.index + 1) * pow3(self.scale)

    @property
    def center(self) -> Rational:
        return (2 * self.index + 1) * pow3(self.scale) / 2

    def endpoints(self) -> Tuple[Rational, Rational]:
        return self.left, self.right

    def rescaled(self, scale: int) -> Tuple[int, int]:
        """Integer endpoints in units of ``3**scale`` (``scale <= self.scale``)."""
        if scale > self.scale:
            raise ValueError("can only rescale to a finer scale")
        f = 3 ** (self.scale - scale)
        return self.index * f, (self.index + 1) * f

    def contains(self, other: "TriadicInterval") -> bool:
        if other.scale > self.scale:
            return False
        lo, hi = self.rescaled(other.scale)
        return lo <= other.index and other.index + 1 <= hi

    def contains_point(self, x: RationalLike) -> bool:
        x = Q(x)
        return self.left <= x < self.right

    def parent(self) -> "TriadicInterval":
        return TriadicInterval(self.scale + 1, self.index // 3)

    def ancestors(self, top_scale: int = 0) -> List["TriadicInterval"]:
        out = []
        node = self
        while node.scale < top_scale:
            node = node.parent()
            out.append(node)
        return out

    def __str__(self) -> str:
        return f"[{rational_str(self.left)}, {rational_str(self.right)})"


UNIT = TriadicInterval(0, 0)


def middle_third(interval: TriadicInterval) -> TriadicInterval:
    return TriadicInterval(interval.scale - 1, 3 * interval.index + 1)


def companion_interval(j: TriadicInterval, eps: int, k: int) -> TriadicInterval:
    """The interval I(J) of length ``3**(1-k) |J|`` abutting J.

    ``eps = +1`` puts it immediately left of J, ``eps = -1`` immediately right.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if eps not in (1, -1):
        raise ValueError(f"eps must be +1 or -1, got {eps}")
    scale = j.scale + 1 - k
    f = 3 ** (k - 1)
    if eps == 1:
        return TriadicInterval(scale, j.index * f - 1)
    return TriadicInterval(scale, (j.index + 1) * f)


def stage_collections(
    k: int, i: int, prior: Sequence[TriadicInterval]
) -> Tuple[List[TriadicInterval], List[TriadicInterval]]:
    """Return ``(J_i, K_i)`` from ``K_{i-1}``, both sorted left to right."""
    if i < 1:
        raise ValueError("stage index must be >= 1")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    scale = -i * k
    if abs(scale) > MAX_SCALE:
        raise ValueError("depth * k too large")
    js = sorted(middle_third(K) for K in prior)
    ks = []
    for J in js:
        lo, hi = J.rescaled(scale)
        ks.extend(TriadicInterval(scale, n) for n in range(lo, hi))
    return js, ks


def all_collections(k: int, depth: int):
    """``[(J_i, K_i)]`` for ``i = 0..depth``; ``J_0`` is empty, ``K_0 = {[0,1)}``."""
    out = [([], [UNIT])]
    for i in range(1, depth + 1):
        out.append(stage_collections(k, i, out[-1][1]))
    return out
