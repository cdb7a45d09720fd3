"""Certified evaluation of sums ``sum_j d_j ln(|b_j - z| / |a_j - z|)``.

Pieces sharing a density are grouped; within a group the logarithms collapse
into one logarithm of an exact integer ratio, built with a product tree.
Only two directed-rounding logarithms per density class are evaluated, so the
enclosure is as tight as the working precision allows.
"""

from __future__ import annotations

from math import lcm, prod
from typing import Iterable, Sequence, Tuple

import numpy as np
from gmpy2 import mpq, mpz

from .certified import DEFAULT_PRECISION, CertifiedValue, csum, log_ratio

_INT64_SAFE = 2**62
_LEAF = 48


class UndefinedAtJump(ValueError):
    """The principal value diverges: the point sits on a density jump."""


def product(values: Sequence[int]) -> mpz:
    """Exact product; C-level leaf products, balanced tree above them."""
    if len(values) <= _LEAF:
        return mpz(prod(values))
    level = [mpz(prod(values[i : i + _LEAF])) for i in range(0, len(values), _LEAF)]
    while len(level) > 1:
        nxt = [level[i] * level[i + 1] for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


class LogPotential:
    """Exact-integer view of a step measure for certified log sums."""

    def __init__(self, lefts: Sequence, rights: Sequence, densities: Sequence):
        self.n = len(lefts)
        den = 1
        for x in list(lefts) + list(rights):
            den = lcm(den, int(mpq(x).denominator))
        self.den = den
        A = [int(mpq(a) * den) for a in lefts]
        B = [int(mpq(b) * den) for b in rights]
        self.bound = max([abs(v) for v in A + B] + [1])
        dtype = np.int64 if self.bound < _INT64_SAFE else object
        self.A = np.array(A, dtype=dtype)
        self.B = np.array(B, dtype=dtype)
        classes = {}
        for j, d in enumerate(densities):
            classes.setdefault(mpq(d), []).append(j)
        self.classes = [(d, np.array(ix, dtype=np.int64)) for d, ix in sorted(classes.items())]

    @classmethod
    def of(cls, measure) -> "LogPotential":
        return cls(measure.lefts, measure.rights, measure.densities)

    def _select(self, idx: np.ndarray, ranges) -> np.ndarray:
        if len(ranges) == 1 and ranges[0] == (0, self.n):
            return idx
        parts = []
        for lo, hi in ranges:
            s, e = np.searchsorted(idx, [lo, hi])
            if e > s:
                parts.append(idx[s:e])
        if not parts:
            return idx[:0]
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def evaluate(
        self,
        z,
        ranges: Iterable[Tuple[int, int]] | None = None,
        prec: int = DEFAULT_PRECISION,
    ) -> CertifiedValue:
        """Enclosure of the log sum at ``z`` over piece-index ranges ``[lo, hi)``."""
        z = mpq(z)
        ranges = [(0, self.n)] if ranges is None else [r for r in ranges if r[1] > r[0]]
        zden = int(z.denominator)
        L = lcm(self.den, zden)
        f = L // self.den
        Z = int(z.numerator) * (L // zden)
        fast = self.bound * f + abs(Z) < _INT64_SAFE and self.A.dtype == np.int64
        terms = []
        for d, idx in self.classes:
            sel = self._select(idx, ranges)
            if not len(sel):
                continue
            if fast:
                nums = np.abs(self.B[sel] * f - Z)
                dens = np.abs(self.A[sel] * f - Z)
                if not (nums.all() and dens.all()):
                    raise UndefinedAtJump(f"point {z} is a density jump")
                nums, dens = nums.tolist(), dens.tolist()
            else:
                nums = [abs(int(b) * f - Z) for b in self.B[sel]]
                dens = [abs(int(a) * f - Z) for a in self.A[sel]]
                if 0 in nums or 0 in dens:
                    raise UndefinedAtJump(f"point {z} is a density jump")
            terms.append(log_ratio(product(nums), product(dens), prec).scale(d))
        return csum(terms, prec)
