"""Finite-depth construction of the counterexample weight as a step measure."""

from __future__ import annotations

import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from gmpy2 import mpq

from .certified import CertifiedValue
from .potential import LogPotential
from .triadic import (
    UNIT,
    Rational,
    TriadicInterval,
    all_collections,
    companion_interval,
    middle_third,
    pow3,
    stage_collections,
)

log = logging.getLogger(__name__)

EXACT_A6_LIMIT = 800


class PrecisionExhausted(RuntimeError):
    """A sign decider could not be certified at the maximal precision."""

    def __init__(self, msg: str, interval: Optional[TriadicInterval] = None):
        super().__init__(msg)
        self.interval = interval


class StepMeasure:
    """Finitely many disjoint constant-density pieces ``[a, b)``.

    Stored canonically: sorted, positive densities, adjacent pieces of equal
    density merged.
    """

    def __init__(self, pieces: Iterable[Tuple] = ()):
        items = sorted(
            (mpq(a), mpq(b), mpq(d)) for a, b, d in pieces if mpq(b) > mpq(a) and mpq(d) != 0
        )
        merged: List[List] = []
        for a, b, d in items:
            if d < 0:
                raise ValueError("densities must be positive")
            if merged and a < merged[-1][1]:
                raise ValueError(f"overlapping pieces at {a}")
            if merged and a == merged[-1][1] and d == merged[-1][2]:
                merged[-1][1] = b
            else:
                merged.append([a, b, d])
        self.lefts: List[Rational] = [p[0] for p in merged]
        self.rights: List[Rational] = [p[1] for p in merged]
        self.densities: List[Rational] = [p[2] for p in merged]
        cum = [mpq(0)]
        for a, b, d in merged:
            cum.append(cum[-1] + d * (b - a))
        self._cum = cum
        self._potential: Optional[LogPotential] = None
        self._endpoints = None

    # basic views -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.lefts)

    @property
    def pieces(self) -> List[Tuple[Rational, Rational, Rational]]:
        return list(zip(self.lefts, self.rights, self.densities))

    def __eq__(self, other) -> bool:
        return isinstance(other, StepMeasure) and self.pieces == other.pieces

    def __repr__(self) -> str:
        return f"StepMeasure({len(self)} pieces, mass={self.total_mass})"

    @property
    def total_mass(self) -> Rational:
        return self._cum[-1]

    @property
    def potential(self) -> LogPotential:
        if self._potential is None:
            self._potential = LogPotential.of(self)
        return self._potential

    def _endpoint_set(self):
        if self._endpoints is None:
            self._endpoints = set(self.lefts) | set(self.rights)
        return self._endpoints

    def breakpoints(self) -> List[Rational]:
        pts = set(self.lefts) | set(self.rights)
        return sorted(pts)

    def piece_index(self, x) -> int:
        """Index of the piece containing ``x`` or -1."""
        x = mpq(x)
        j = bisect_right(self.lefts, x) - 1
        if j >= 0 and x < self.rights[j]:
            return j
        return -1

    def density_at(self, x) -> Rational:
        j = self.piece_index(x)
        return self.densities[j] if j >= 0 else mpq(0)

    def cdf(self, x) -> Rational:
        """Mass of ``(-inf, x)``."""
        x = mpq(x)
        j = bisect_right(self.lefts, x) - 1
        if j < 0:
            return mpq(0)
        return self._cum[j] + self.densities[j] * (min(x, self.rights[j]) - self.lefts[j])

    def mass(self, lo, hi=None) -> Rational:
        """Exact mass of ``[lo, hi)``; ``lo`` may also be an interval or a pair."""
        if isinstance(lo, TriadicInterval):
            lo, hi = lo.left, lo.right
        elif hi is None and isinstance(lo, tuple):
            lo, hi = lo
        lo, hi = mpq(lo), mpq(hi)
        if hi <= lo:
            return mpq(0)
        return self.cdf(hi) - self.cdf(lo)

    def index_range(self, lo, hi) -> Tuple[int, int]:
        """Pieces lying inside ``[lo, hi)``; raises if one straddles a boundary."""
        lo, hi = mpq(lo), mpq(hi)
        s = bisect_right(self.rights, lo)
        e = bisect_left(self.lefts, hi)
        if s < e and (self.lefts[s] < lo or self.rights[e - 1] > hi):
            raise ValueError("a piece straddles the region boundary")
        return s, max(s, e)

    # derived measures ----------------------------------------------------------

    def restrict(self, lo, hi) -> "StepMeasure":
        lo, hi = mpq(lo), mpq(hi)
        out = []
        for a, b, d in self.pieces:
            a2, b2 = max(a, lo), min(b, hi)
            if b2 > a2:
                out.append((a2, b2, d))
        return StepMeasure(out)

    def without(self, intervals: Sequence[Tuple]) -> "StepMeasure":
        """Restriction to the complement of a union of disjoint intervals."""
        cuts = sorted((mpq(a), mpq(b)) for a, b in intervals)
        starts = [c[0] for c in cuts]
        out = []
        for a, b, d in self.pieces:
            cur = a
            j = max(bisect_right(starts, a) - 1, 0)
            while j < len(cuts) and cuts[j][0] < b and cur < b:
                ca, cb = cuts[j]
                if cb > cur:
                    if ca > cur:
                        out.append((cur, min(ca, b), d))
                    cur = max(cur, cb)
                j += 1
            if cur < b:
                out.append((cur, b, d))
        return StepMeasure(out)

    def reflect(self, s=mpq(1, 2)) -> "StepMeasure":
        s = mpq(s)
        return StepMeasure((2 * s - b, 2 * s - a, d) for a, b, d in self.pieces)

    def scaled(self, c) -> "StepMeasure":
        return StepMeasure((a, b, d * mpq(c)) for a, b, d in self.pieces)

    def __add__(self, other: "StepMeasure") -> "StepMeasure":
        pts = sorted(set(self.breakpoints()) | set(other.breakpoints()))
        out = []
        for a, b in zip(pts, pts[1:]):
            d = self.density_at(a) + other.density_at(a)
            if d:
                out.append((a, b, d))
        return StepMeasure(out)

    def multiply(self, other: "StepMeasure") -> "StepMeasure":
        """Pointwise product of the two densities."""
        pts = sorted(set(self.breakpoints()) | set(other.breakpoints()))
        out = []
        for a, b in zip(pts, pts[1:]):
            d = self.density_at(a) * other.density_at(a)
            if d:
                out.append((a, b, d))
        return StepMeasure(out)

    def float_arrays(self):
        return (
            np.array([float(a) for a in self.lefts]),
            np.array([float(b) for b in self.rights]),
            np.array([float(d) for d in self.densities]),
        )


def density_at(w: StepMeasure, x) -> Rational:
    return w.density_at(x)


def mass(w: StepMeasure, lo, hi=None) -> Rational:
    return w.mass(lo, hi)


# construction -------------------------------------------------------------


@dataclass(frozen=True)
class SignEntry:
    eps: int
    decider: CertifiedValue
    defaulted: bool = False


class SignTable(dict):
    """Map ``J -> SignEntry``."""

    def eps(self, J: TriadicInterval) -> int:
        return self[J].eps

    @property
    def defaulted_count(self) -> int:
        return sum(1 for e in self.values() if e.defaulted)


@dataclass(frozen=True)
class ConstructionParams:
    k: int
    depth: int
    precision: int = 128
    tolerance: Optional[Rational] = None
    base_support: str = "recursive"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.precision < 64:
            raise ValueError("precision must be at least 64 bits")
        if self.base_support not in ("recursive", "literal"):
            raise ValueError(f"unknown base support mode {self.base_support!r}")
        if (self.depth + 2) * self.k > 10**6:
            raise ValueError("depth * k too large")

    @property
    def tau(self) -> Rational:
        if self.tolerance is not None:
            return mpq(self.tolerance)
        return pow3(-(self.depth + 2) * self.k)


def build_w0(k: int, base_support: str = "recursive", prec: int = 128):
    """Stage-0 measure: uniform mass 1 on ``J ∪ I(J)`` with ``J = [1/3, 2/3)``."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    J = middle_third(UNIT)
    density = 1 / (mpq(1, 3) + pow3(-k))
    if base_support == "recursive":
        key = J
        comp = companion_interval(J, 1, k)
    elif base_support == "literal":
        key = UNIT
        comp = middle_third(companion_interval(UNIT, 1, k))
    else:
        raise ValueError(f"unknown base support mode {base_support!r}")
    w0 = StepMeasure([(J.left, J.right, density), (comp.left, comp.right, density)])
    # fixed convention, not a tolerance fallback
    entry = SignEntry(1, CertifiedValue.exact(0, prec), defaulted=False)
    return w0, (key, entry)


def _a6_exact(masses, idx, pos, length) -> Rational:
    n0 = idx[pos]
    total = mpq(0)
    for j, (m, n) in enumerate(zip(masses, idx)):
        if j != pos:
            total += m / ((n - n0) * length)
    return total


def _a6_filtered(masses, idx, length) -> List[CertifiedValue]:
    """Float sums with a rigorous forward error bound.

    Only IEEE-exact operations and correctly rounded division are used, so
    the textbook bounds for recursive summation apply.
    """
    if all(m == masses[0] for m in masses):
        return _a6_runs(masses[0], idx, length)
    return _a6_matrix(masses, idx, length)


_U = 2.0**-53


def _a6_matrix(masses, idx, length, chunk=64) -> List[CertifiedValue]:
    mu = np.array([float(m / length) for m in masses])
    ind = np.array(idx, dtype=np.float64)
    n = len(ind)
    out = []
    for s in range(0, n, chunk):
        diff = ind[None, :] - ind[s : s + chunk, None]
        diff[diff == 0] = np.inf
        terms = mu[None, :] / diff
        sums = terms.sum(axis=1)
        rads = np.abs(terms).sum(axis=1) * (n + 4) * _U * 1.01
        out.extend(CertifiedValue.from_float(float(m), float(r)) for m, r in zip(sums, rads))
    return out


def _a6_runs(m, idx, length, chunk=4096) -> List[CertifiedValue]:
    """Equal masses: sums of 1/(j - n) over runs of consecutive indices via harmonic numbers."""
    ind = np.array(idx, dtype=np.int64)
    breaks = np.nonzero(np.diff(ind) != 1)[0]
    starts = np.concatenate([[ind[0]], ind[breaks + 1]])
    ends = np.concatenate([ind[breaks], [ind[-1]]])
    span = int(ind[-1] - ind[0]) + 1
    H = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, span + 1))])
    # |H_hat[m] - H_m| <= (m + 2) u H_hat[m] (1 + O(u)) for recursive summation
    E = (np.arange(span + 1) + 2) * _U * H * 1.01
    mu = float(m / length)
    R = len(starts)
    out = []
    for c in range(0, len(ind), chunk):
        n = ind[c : c + chunk, None]
        hr = np.clip(ends[None, :] - n, 0, None)
        lr = np.clip(starts[None, :] - n - 1, 0, None)
        hl = np.clip(n - starts[None, :], 0, None)
        ll = np.clip(n - ends[None, :] - 1, 0, None)
        S = ((H[hr] - H[lr]) - (H[hl] - H[ll])).sum(axis=1)
        err = (E[hr] + E[lr] + E[hl] + E[ll]).sum(axis=1)
        mag = (H[hr] + H[lr] + H[hl] + H[ll]).sum(axis=1)
        err = err + (4 * R + 2) * _U * mag
        val = mu * S
        rad = (abs(mu) * err * (1 + 4 * _U) + np.abs(val) * 3 * _U) * 1.01
        out.extend(CertifiedValue.from_float(float(v), float(r)) for v, r in zip(val, rad))
    return out


def _frozen_part(w_prev: StepMeasure, js: Sequence[TriadicInterval]) -> StepMeasure:
    return w_prev.without([(J.left, J.right) for J in js])


def choose_sign(
    w_prev: StepMeasure,
    stage_i: int,
    J: TriadicInterval,
    K_collection: Sequence[TriadicInterval],
    params: ConstructionParams,
    frozen: Optional[StepMeasure] = None,
    a6: Optional[CertifiedValue] = None,
):
    """Orientation of I(J) from the far-field terms at ``c(J)``.

    Returns ``(eps, decider, defaulted)``.  ``decider`` encloses the sum of the
    mean-kernel integral over the complement of the stage's K's and the discrete
    sum of K'-masses over centre distances.
    """
    K = TriadicInterval(J.scale + 1, J.index // 3)
    if frozen is None:
        frozen = w_prev.without(_merge_runs(K_collection))
    c = J.center
    prec = params.precision
    max_prec = 4 * params.precision
    exact_a6 = False
    while True:
        if len(frozen):
            a4 = frozen.potential.evaluate(c, prec=prec)
        else:
            a4 = CertifiedValue.exact(0, prec)
        if a6 is None or (exact_a6 and a6.prec != prec):
            a6 = _a6_certified(w_prev, K, K_collection, prec)
            exact_a6 = True
        decider = a4 + a6
        s = decider.sign()
        if s:
            return s, decider, False
        if not exact_a6:
            a6 = None
            continue
        if prec >= max_prec:
            break
        prec *= 2
    if abs(decider.mid) < params.tau * w_prev.total_mass:
        return 1, decider, True
    raise PrecisionExhausted(f"cannot certify the sign for J = {J}", J)


def _a6_certified(w_prev, K, K_collection, prec) -> CertifiedValue:
    if len(K_collection) <= 1:
        return CertifiedValue.exact(0, prec)
    idx = [Kp.index for Kp in K_collection]
    pos = bisect_left(idx, K.index)
    masses = [w_prev.mass(Kp) for Kp in K_collection]
    return CertifiedValue.exact(_a6_exact(masses, idx, pos, K.length), prec)


def _merge_runs(intervals: Sequence[TriadicInterval]) -> List[Tuple[Rational, Rational]]:
    out: List[List] = []
    for I in sorted(intervals):
        if out and out[-1][1] == I.left:
            out[-1][1] = I.right
        else:
            out.append([I.left, I.right])
    return [(a, b) for a, b in out]


def refine_stage(
    w_prev: StepMeasure,
    stage_i: int,
    signs: SignTable,
    params: ConstructionParams,
    collections=None,
) -> StepMeasure:
    """Choose the stage's signs and redistribute each K's mass onto ``K^m ∪ I(K^m)``."""
    if collections is None:
        prior = all_collections(params.k, stage_i - 1)[-1][1]
        collections = stage_collections(params.k, stage_i, prior)
    js, ks = collections
    frozen = w_prev.without(_merge_runs(js))
    masses = [w_prev.mass(K) for K in ks]
    if len(ks) > EXACT_A6_LIMIT:
        a6s = _a6_filtered(masses, [K.index for K in ks], ks[0].length)
    else:
        a6s = [None] * len(ks)
        if len(ks) > 1:
            idx = [K.index for K in ks]
            a6s = [
                CertifiedValue.exact(_a6_exact(masses, idx, p, ks[0].length), params.precision)
                for p in range(len(ks))
            ]
        else:
            a6s = [CertifiedValue.exact(0, params.precision)]
    pieces = list(frozen.pieces)
    for K, m, a6 in zip(ks, masses, a6s):
        J = middle_third(K)
        eps, decider, defaulted = choose_sign(w_prev, stage_i, J, ks, params, frozen=frozen, a6=a6)
        signs[J] = SignEntry(eps, decider, defaulted)
        I = companion_interval(J, eps, params.k)
        density = m / (J.length + I.length)
        pieces.append((J.left, J.right, density))
        pieces.append((I.left, I.right, density))
    return StepMeasure(pieces)


@dataclass
class Construction:
    params: ConstructionParams
    stages: List[StepMeasure]
    signs: SignTable
    collections: List[Tuple[List[TriadicInterval], List[TriadicInterval]]]

    @property
    def weight(self) -> StepMeasure:
        return self.stages[-1]

    def K(self, i: int) -> List[TriadicInterval]:
        return self.collections[i][1]

    def J(self, i: int) -> List[TriadicInterval]:
        return self.collections[i][0]


def construct(params: ConstructionParams) -> Construction:
    w, (key, entry) = build_w0(params.k, params.base_support, params.precision)
    signs = SignTable({key: entry})
    cols = all_collections(params.k, params.depth)
    stages = [w]
    for i in range(1, params.depth + 1):
        log.debug("stage %d: %d intervals", i, len(cols[i][1]))
        w = refine_stage(w, i, signs, params, collections=cols[i])
        stages.append(w)
    return Construction(params, stages, signs, cols)


def build_weight(params: ConstructionParams) -> Tuple[StepMeasure, SignTable]:
    c = construct(params)
    return c.weight, c.signs
