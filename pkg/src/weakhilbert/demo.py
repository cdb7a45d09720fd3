"""Ratio measurements: the dual quadratic functional and the weak-type demos.

The dual ratio is a float quadrature with an error estimate plus a certified
lower bound over the companion middle thirds. The weak-type pipeline
(test function, rearrangement threshold, set E) runs in float on a cell grid;
only the pointwise maximal inequality is checked in exact arithmetic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import gmpy2
import numpy as np
from gmpy2 import mpfr, mpq

from .certified import down, up
from .measure import Construction, StepMeasure
from .operators import (
    SlopeEnvelope,
    hilbert_pv,
    jump_charges,
    log_sum_float,
    maximal_float,
    maximal_many,
    weighted_maximal_float,
    weighted_maximal_many,
)
from .triadic import middle_third
from .verify import frozen_companions, sample_points

UNIT_LO, UNIT_HI = mpq(0), mpq(1)


class QuadratureError(RuntimeError):
    """Panel refinement did not reach the requested tolerance."""


# ---------------------------------------------------------------------------
# quadrature rule on a piece


def graded_rule(levels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[0, 1]``, geometrically graded toward both ends."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    edges = [0.0] + [0.5 * 2.0 ** -l for l in range(levels, -1, -1)]
    xs, ws = [], []
    for a, b in zip(edges, edges[1:]):
        h = b - a
        xs.append(a + h * (gx + 1) / 2)
        ws.append(gw * h / 2)
    x = np.concatenate(xs)
    wt = np.concatenate(ws)
    return np.concatenate([x, 1 - x[::-1]]), np.concatenate([wt, wt[::-1]])


@dataclass
class PieceField:
    """Float view of a weight: pieces, Hw of a source measure, and Mw.

    Pieces are the maximal intervals of positive density with no breakpoint of
    the weight or the source inside. The logarithms of a piece's own endpoints
    are taken from exact local offsets, so nodes may approach the endpoints
    closer than float spacing of ``x``.
    """

    lefts: np.ndarray
    rights: np.ndarray
    dens: np.ndarray
    seg: np.ndarray
    env: SlopeEnvelope
    charges: Tuple[np.ndarray, np.ndarray]
    q_left: np.ndarray
    q_right: np.ndarray

    @classmethod
    def of(cls, w: StepMeasure, source: Optional[StepMeasure] = None) -> "PieceField":
        source = w if source is None else source
        pts = sorted(set(w.breakpoints()) | set(source.breakpoints()))
        pts = [pts[0] - 1] + pts + [pts[-1] + 1]
        env = SlopeEnvelope(pts, [w.cdf(e) for e in pts])
        keep = [j for j in range(len(pts) - 1) if w.density_at(pts[j]) > 0]
        seg = np.array(keep, dtype=np.int64)
        lefts = np.array([float(pts[j]) for j in keep])
        rights = np.array([float(pts[j + 1]) for j in keep])
        dens = np.array([float(w.density_at(pts[j])) for j in keep])
        src, q = jump_charges(source.lefts, source.rights, source.densities)

        def charge_at(xs):
            i = np.clip(np.searchsorted(src, xs), 0, len(src) - 1)
            return np.where(src[i] == xs, q[i], 0.0)

        return cls(lefts, rights, dens, seg, env, (src, q), charge_at(lefts), charge_at(rights))

    def __len__(self) -> int:
        return len(self.lefts)

    def sample(self, pieces: np.ndarray, u: np.ndarray, clamp: float = 1e-7):
        """``(x, Hw, Mw)`` at parameters ``u`` inside each listed piece."""
        P, U = np.meshgrid(pieces, u, indexing="ij")
        P, U = P.ravel(), U.ravel()
        a, b = self.lefts[P], self.rights[P]
        L = b - a
        qa, qb = self.q_left[P], self.q_right[P]
        # the rest of the sum is smooth on the piece; evaluate it off the ends
        Uc = np.clip(U, clamp, 1 - clamp)
        xc = a + Uc * L
        full = log_sum_float(*self.charges, xc)
        rest = full - qa * np.log(np.abs(xc - a)) - qb * np.log(np.abs(b - xc))
        h = rest + qa * np.log(U * L) + qb * np.log((1 - U) * L)
        m = self.env.evaluate(self.seg[P], U)
        x = a + U * L
        n = len(pieces)
        return x, h.reshape(n, len(u)), m.reshape(n, len(u))


def _numerator(field_: PieceField, pieces: np.ndarray, levels: int, order: int):
    """Per-piece ``int (Hw)^2 w / (Mw)^2`` with the graded rule."""
    u, wt = graded_rule(levels, order)
    out = np.empty(len(pieces))
    chunk = max(1, (1 << 21) // len(u))
    for s in range(0, len(pieces), chunk):
        p = pieces[s : s + chunk]
        _, h, m = field_.sample(p, u)
        d = field_.dens[p]
        L = field_.rights[p] - field_.lefts[p]
        out[s : s + chunk] = ((h / m) ** 2 @ wt) * d * L
    return out


@dataclass
class DualcpResult:
    ratio: float
    error: float
    lower_bound: float
    numerator: float
    denominator: mpq
    levels: int
    order: int
    lower_bound_sites: int = 0

    @property
    def lower_bound_ratio(self) -> float:
        return self.lower_bound / float(self.denominator)


def companion_lower_bound(c: Construction, samples: int = 3, seed: int = 0, precision: int = 128) -> Tuple[float, int]:
    """``sum |I^m| * min|Hw|^2 / (49 w)`` over frozen companions ``I``.

    ``min|Hw|`` is the least certified lower bound over the sampled points of
    ``I^m``; ``Mw <= 7 w`` there.
    """
    w = c.weight
    rng = random.Random(seed)
    sites = 0
    acc = mpfr(0)
    for _, _, I in frozen_companions(c):
        Im = middle_third(I)
        lows = []
        for x in sample_points(Im.left, Im.right, samples, rng):
            lows.append(hilbert_pv(w, x, precision).abs_lo())
            sites += 1
        d = w.density_at(Im.left)
        with gmpy2.context(precision=precision, round=gmpy2.RoundDown):
            m = min(lows)
            acc = acc + m * m * down(Im.length, precision) / up(49 * d, precision)
    return float(acc), sites


def dualcp_ratio(
    c: Construction, levels: int = 14, order: int = 16, rtol: float = 1e-5,
    samples: int = 3, seed: int = 0, w: Optional[StepMeasure] = None, lower_bound: bool = True,
    max_refinements: int = 3, probe: int = 64,
) -> DualcpResult:
    """``||H(w 1_[0,1))||^2_{L^2(w/(Mw)^2)} / ||1_[0,1)||^2_{L^2(w)}``.

    ``w`` overrides the constructed weight (e.g. with a Gaussian floor); the
    source of the transform is always its restriction to ``[0, 1)``.
    """
    w = c.weight if w is None else w
    source = w.restrict(UNIT_LO, UNIT_HI)
    den = source.total_mass
    fld = PieceField.of(w, source)
    n = len(fld)
    pieces = np.arange(n)
    rng = np.random.default_rng(seed)
    probe_set = np.unique(np.concatenate([
        rng.choice(n, size=min(probe, n), replace=False),
        np.argsort(-(fld.dens * (fld.rights - fld.lefts)))[: min(probe, n)],
    ]))
    for _ in range(max_refinements + 1):
        vals = _numerator(fld, pieces, levels, order)
        fine = _numerator(fld, probe_set, levels + 6, order + 8)
        rel = np.abs(fine - vals[probe_set]) / np.maximum(vals[probe_set], 1e-300)
        num = float(vals.sum())
        err = float(rel.max(initial=0.0)) * num
        if err <= rtol * num:
            break
        levels += 4
        order += 4
    else:
        raise QuadratureError(f"relative error {err / num:.2e} above {rtol:.1e}")
    lb, sites = (companion_lower_bound(c, samples, seed) if lower_bound else (float("nan"), 0))
    return DualcpResult(num / float(den), err / float(den), lb, num, den, levels, order, sites)


# ---------------------------------------------------------------------------
# weak-type demonstration


@dataclass
class TestFunction:
    """``f = (Hw) w / (Mw)^2`` on ``m`` equal cells per support piece."""

    piece: np.ndarray
    grid: int
    lefts: np.ndarray
    rights: np.ndarray
    values: np.ndarray
    w_density: np.ndarray
    hw: np.ndarray
    mw: np.ndarray

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.lefts + self.rights)

    @property
    def widths(self) -> np.ndarray:
        return self.rights - self.lefts

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.values) @ self.widths)

    def charges(self) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.concatenate([self.lefts, self.rights])
        q = np.concatenate([-self.values, self.values])
        order = np.argsort(pts, kind="stable")
        pts, q = pts[order], q[order]
        uniq, inv = np.unique(pts, return_inverse=True)
        return uniq, np.bincount(inv, weights=q)

    def transform(self, xs) -> np.ndarray:
        """``Hf`` at float points away from cell edges."""
        return log_sum_float(*self.charges(), np.asarray(xs, dtype=float))


def build_test_function(w: StepMeasure, grid: int = 8, field_: Optional[PieceField] = None) -> TestFunction:
    fld = field_ or PieceField.of(w)
    u = (np.arange(grid) + 0.5) / grid
    pieces = np.arange(len(fld))
    _, h, m = fld.sample(pieces, u)
    L = fld.rights - fld.lefts
    k = np.arange(grid)
    lefts = (fld.lefts[:, None] + L[:, None] * k[None, :] / grid).ravel()
    rights = (fld.lefts[:, None] + L[:, None] * (k[None, :] + 1) / grid).ravel()
    rights.reshape(len(fld), grid)[:, -1] = fld.rights
    d = np.repeat(fld.dens, grid)
    hv, mv = h.ravel(), m.ravel()
    return TestFunction(np.repeat(pieces, grid), grid, lefts, rights, hv * d / mv**2, d, hv, mv)


@dataclass
class DemoResult:
    t: float
    lhs: float
    rhs: float
    ratio: float
    E: List[Tuple[float, float]]
    grid: int
    extras: dict = field(default_factory=dict)


def _runs(lefts: np.ndarray, rights: np.ndarray, mask: np.ndarray) -> List[Tuple[float, float]]:
    out: List[List[float]] = []
    for a, b in zip(lefts[mask], rights[mask]):
        if out and out[-1][1] == a:
            out[-1][1] = b
        else:
            out.append([a, b])
    return [(float(a), float(b)) for a, b in out]


def rearrangement_threshold(values: np.ndarray, masses: np.ndarray) -> Tuple[float, float]:
    """``t`` maximizing ``t^2 * mass{values > t}`` over the values themselves."""
    order = np.argsort(-values, kind="stable")
    v = values[order]
    cum = np.concatenate([[0.0], np.cumsum(masses[order])])
    # mass strictly above v[j]: everything before the first occurrence of v[j]
    first = np.searchsorted(-v, -v, side="left")
    above = cum[first]
    score = v**2 * above
    j = int(np.argmax(score))
    return float(v[j]), float(above[j])


def cuperez_functional(w: StepMeasure, tf: TestFunction) -> DemoResult:
    """``t^2 w{|Hf| > t}`` against ``int |f|^2 (Mw/w)^2 w``."""
    hf = np.abs(tf.transform(tf.mids))
    masses = tf.w_density * tf.widths
    t, level = rearrangement_threshold(hf, masses)
    lhs = t * t * level
    rhs = float(np.sum(tf.values**2 * (tf.mw / tf.w_density) ** 2 * masses))
    E = hf > t
    levels = np.sort(np.unique(hf))[:: max(1, len(hf) // 64)]
    dist = np.array([masses[hf > s].sum() for s in levels])
    extras = {
        "hf": hf,
        "E_mask": E,
        "distribution_monotone": bool(np.all(np.diff(dist) <= 1e-15 * max(1.0, dist.max(initial=0)))),
        "E_mass": float(masses[E].sum()),
        "l1_norm": tf.l1_norm,
    }
    return DemoResult(t, lhs, rhs, lhs / rhs, _runs(tf.lefts, tf.rights, E), tf.grid, extras)


def _exact_cells(w: StepMeasure, tf: TestFunction, cells: np.ndarray) -> List[Tuple[mpq, mpq]]:
    out = []
    g = tf.grid
    for c in cells:
        j, i = int(tf.piece[c]), int(c) % g
        a, b = w.lefts[j], w.rights[j]
        out.append((a + (b - a) * mpq(i, g), a + (b - a) * mpq(i + 1, g)))
    return out


def theorem_main_ratio(
    w: StepMeasure, tf: TestFunction, cup: DemoResult, samples: int = 200, seed: int = 0
) -> DemoResult:
    """``t w(E)`` against ``int |f| M(w 1_E)`` for ``E = {|Hf| > t}``."""
    mask = cup.extras["E_mask"]
    cells = np.nonzero(mask)[0]
    bounds = _exact_cells(w, tf, cells)
    E_ind = StepMeasure([(a, b, 1) for a, b in bounds])
    wE = E_ind.multiply(w)
    lhs = cup.t * float(wE.total_mass)
    mids = tf.mids
    m_wE = maximal_float(wE, mids)
    rhs = float(np.sum(np.abs(tf.values) * m_wE * tf.widths))
    # Cauchy-Schwarz chain on the grid
    mw_E = weighted_maximal_float(w, E_ind, mids)
    masses = tf.w_density * tf.widths
    a = float(np.sum(tf.values**2 * tf.mw**2 / tf.w_density * tf.widths))
    b = float(np.sum(mw_E**2 * masses))
    chain = float(np.sum(np.abs(tf.values) * tf.mw * mw_E * tf.widths))
    holder_rhs = (a * b) ** 0.5
    # exact pointwise M(w 1_E) <= Mw * M_w 1_E at sampled cell midpoints
    rng = random.Random(seed)
    n = len(mids)
    pick = sorted(rng.sample(range(n), min(samples, n)))
    xs = [(lo + hi) / 2 for lo, hi in _exact_cells(w, tf, np.array(pick))]
    left = maximal_many(wE, xs)
    mw = maximal_many(w, xs)
    mwe = weighted_maximal_many(w, E_ind, xs)
    violations = [str(x) for x, l, p, q in zip(xs, left, mw, mwe) if l > p * q]
    extras = {
        "pointwise_samples": len(xs),
        "pointwise_violations": violations,
        "holder_lhs": rhs,
        "holder_chain": chain,
        "holder_rhs": holder_rhs,
        "holder_ok": rhs <= chain * (1 + 1e-9) and chain <= holder_rhs * (1 + 1e-9),
        "E_cells": int(mask.sum()),
        "E_mass": float(wE.total_mass),
    }
    return DemoResult(cup.t, lhs, rhs, lhs / rhs, cup.E, tf.grid, extras)


@dataclass
class DemoSuite:
    test_function: TestFunction
    cuperez: DemoResult
    theorem: DemoResult


def run_demo(c: Construction, grid: int = 8, samples: int = 200, seed: int = 0,
             w: Optional[StepMeasure] = None) -> DemoSuite:
    w = c.weight if w is None else w
    tf = build_test_function(w, grid)
    cup = cuperez_functional(w, tf)
    thm = theorem_main_ratio(w, tf, cup, samples, seed)
    return DemoSuite(tf, cup, thm)


# ---------------------------------------------------------------------------
# Gaussian floor


def gaussian_floor(w: StepMeasure, c, R, resolution: int = 256, precision: int = 64) -> StepMeasure:
    """``w`` plus a step minorant of ``c exp(-x^2)`` on ``[-R, R]``.

    Each cell gets an exact rational at most the cell infimum, evaluated with
    downward rounding at the far endpoint.
    """
    c, R = mpq(c), mpq(R)
    if c <= 0 or R <= 0:
        raise ValueError("floor constant and window must be positive")
    if resolution < 1:
        raise ValueError("resolution must be positive")
    h = 2 * R / resolution
    cells = []
    for i in range(resolution):
        a = -R + i * h
        b = a + h
        far = max(abs(a), abs(b))
        with gmpy2.context(precision=precision, round=gmpy2.RoundUp):
            sq = mpfr(far * far)
        with gmpy2.context(precision=precision, round=gmpy2.RoundDown):
            v = gmpy2.exp(-sq)
        lo = mpq(v) * c
        if lo > 0:
            cells.append((a, b, lo))
    return w + StepMeasure(cells)
