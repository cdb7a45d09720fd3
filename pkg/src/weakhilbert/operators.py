"""Hilbert transform and maximal functions of step measures.

Conventions: ``Hw(x) = p.v. \\int w(y) / (y - x) dy`` and ``M`` is the
uncentered Hardy-Littlewood maximal operator.
"""

from __future__ import annotations

import math
from math import lcm
from typing import List, Optional, Sequence, Tuple

import numpy as np
from gmpy2 import mpfr, mpq

from .certified import DEFAULT_PRECISION, CertifiedValue
from .measure import PrecisionExhausted, StepMeasure
from .potential import UndefinedAtJump

__all__ = [
    "UndefinedAtJump",
    "hilbert_pv",
    "hilbert_region",
    "pv_quadrature_oracle",
    "hilbert_float",
    "log_sum_float",
    "maximal",
    "maximal_many",
    "maximal_oracle",
    "weighted_maximal",
    "weighted_maximal_many",
    "weighted_maximal_oracle",
    "SlopeEnvelope",
    "maximal_float",
    "maximal_envelope",
    "weighted_maximal_float",
    "slope_envelope",
]


# ---------------------------------------------------------------------------
# certified principal value


def _check_point(w: StepMeasure, x) -> None:
    x = mpq(x)
    if x in w._endpoint_set():
        raise UndefinedAtJump(f"Hw is undefined at the density jump {x}")


def hilbert_region(
    w: StepMeasure, z, ranges: Optional[Sequence[Tuple[int, int]]] = None,
    precision: int = DEFAULT_PRECISION,
) -> CertifiedValue:
    """Contribution of the pieces with index in ``ranges`` to ``Hw(z)``."""
    return w.potential.evaluate(z, ranges, precision)


def hilbert_pv(w: StepMeasure, x, precision: int = DEFAULT_PRECISION) -> CertifiedValue:
    _check_point(w, x)
    val = w.potential.evaluate(x, None, precision)
    scale = max(mpfr(1), abs(val.mid))
    if val.rad > scale * mpfr(2) ** (-(precision // 2)):
        raise PrecisionExhausted(f"radius {val.rad} above target at precision {precision}")
    return val


# ---------------------------------------------------------------------------
# independent quadrature oracle

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _panels_toward(x: float, a: float, b: float, gap: float) -> List[Tuple[float, float]]:
    """Split [a, b] (on one side of x, nearest point at distance ``gap``) geometrically."""
    out = []
    if a >= x:
        lo = a
        while lo < b:
            hi = min(b, x + 2 * (lo - x))
            out.append((lo, hi))
            lo = hi
    else:
        hi = b
        while hi > a:
            lo = max(a, x - 2 * (x - hi))
            out.append((lo, hi))
            hi = lo
    return out


def _integrate_inverse(x: float, panels: Sequence[Tuple[float, float]], d: np.ndarray) -> float:
    if not panels:
        return 0.0
    p = np.array(panels)
    half = (p[:, 1] - p[:, 0]) / 2
    mid = (p[:, 1] + p[:, 0]) / 2
    y = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = (_GL_W[None, :] / (y - x)).sum(axis=1) * half
    return float((vals * d).sum())


def pv_quadrature_oracle(
    w: StepMeasure, x, deltas: Optional[Sequence[float]] = None
) -> Tuple[float, float]:
    """Symmetric-excision quadrature of the PV with Richardson extrapolation.

    Returns ``(estimate, error_heuristic)``.  Uses only Gauss-Legendre sums of
    ``1 / (y - x)``; no logarithms.
    """
    xf = float(mpq(x))
    a, b, d = w.float_arrays()
    j = w.piece_index(x)
    dist = np.where(b <= xf, xf - b, np.where(a > xf, a - xf, 0.0))
    length = b - a
    others = np.ones(len(a), dtype=bool)
    if j >= 0:
        others[j] = False
    easy = others & (length <= dist)
    total = 0.0
    if easy.any():
        mid = (a[easy] + b[easy]) / 2
        half = length[easy] / 2
        y = mid[:, None] + half[:, None] * _GL_X[None, :]
        total += float(((_GL_W[None, :] / (y - xf)).sum(axis=1) * half * d[easy]).sum())
    for i in np.nonzero(others & ~easy)[0]:
        total += _integrate_inverse(xf, _panels_toward(xf, a[i], b[i], dist[i]), np.full(1, d[i]))
    if j < 0:
        return total, 1e-12 * max(1.0, abs(total))
    aj, bj, dj = a[j], b[j], d[j]
    room = min(xf - aj, bj - xf)
    if deltas is None:
        deltas = [room / 2 ** (m + 1) for m in range(4)]
    vals = []
    for delta in deltas:
        left = _panels_toward(xf, aj, xf - delta, delta)
        right = _panels_toward(xf, xf + delta, bj, delta)
        vals.append(_integrate_inverse(xf, left + right, np.full(len(left) + len(right), dj)))
    rich = [2 * v2 - v1 for v1, v2 in zip(vals, vals[1:])]
    est = rich[-1] if rich else vals[-1]
    err = abs(rich[-1] - rich[-2]) if len(rich) > 1 else abs(vals[-1] - vals[0])
    return total + est, err + 1e-12 * max(1.0, abs(total))


# ---------------------------------------------------------------------------
# float log-potential treecode


def log_sum_float(
    sources: np.ndarray,
    charges: np.ndarray,
    targets: np.ndarray,
    leaf: int = 32,
    theta: float = 0.35,
    order: int = 26,
) -> np.ndarray:
    """``sum_j charges[j] * ln|t - sources[j]|`` for every target ``t``.

    Barnes-Hut style treecode with Taylor far-field expansions; relative
    truncation error about ``theta ** (order + 1)`` of the absolute charge.
    """
    so = np.argsort(sources, kind="stable")
    s = np.asarray(sources, dtype=float)[so]
    q = np.asarray(charges, dtype=float)[so]
    to = np.argsort(targets, kind="stable")
    t = np.asarray(targets, dtype=float)[to]
    out = np.zeros(len(t))
    if len(s) == 0 or len(t) == 0:
        return out
    orders = np.arange(1, order + 1)
    stack = [(0, len(s), 0, len(t))]
    while stack:
        lo, hi, tlo, thi = stack.pop()
        if thi <= tlo:
            continue
        c = 0.5 * (s[lo] + s[hi - 1])
        r = 0.5 * (s[hi - 1] - s[lo])
        reach = r / theta
        a = tlo + np.searchsorted(t[tlo:thi], c - reach, side="left")
        b = tlo + np.searchsorted(t[tlo:thi], c + reach, side="right")
        if a > tlo or b < thi:
            qs = q[lo:hi]
            far = np.r_[tlo:a, b:thi]
            tf = t[far]
            dt = tf - c
            res = qs.sum() * np.log(np.abs(dt))
            if r > 0:
                z = (s[lo:hi] - c) / r
                mom = (qs[:, None] * z[:, None] ** orders[None, :]).sum(axis=0) / orders
                u = r / dt
                # Horner in u
                acc = np.zeros_like(u)
                for m in range(order - 1, -1, -1):
                    acc = (acc + mom[m]) * u
                res -= acc
            out[far] += res
        if b > a:
            if hi - lo <= leaf:
                tn = t[a:b]
                out[a:b] += np.log(np.abs(tn[:, None] - s[None, lo:hi])) @ q[lo:hi]
            else:
                m = (lo + hi) // 2
                stack.append((lo, m, a, b))
                stack.append((m, hi, a, b))
    res = np.empty_like(out)
    res[to] = out
    return res


def jump_charges(lefts, rights, densities) -> Tuple[np.ndarray, np.ndarray]:
    """Breakpoints and charges so that ``Hw(x) = sum charge * ln|x - e|``."""
    charge = {}
    for a, b, d in zip(lefts, rights, densities):
        charge[a] = charge.get(a, 0) - d
        charge[b] = charge.get(b, 0) + d
    pts = sorted(charge)
    return (
        np.array([float(p) for p in pts]),
        np.array([float(charge[p]) for p in pts]),
    )


def hilbert_float(w: StepMeasure, xs, **kw) -> np.ndarray:
    """Non-certified ``Hw`` at many points (closed form, treecode summation)."""
    e, c = jump_charges(w.lefts, w.rights, w.densities)
    return log_sum_float(e, c, np.asarray(xs, dtype=float), **kw)


# ---------------------------------------------------------------------------
# exact maximal functions


def _common_den(values) -> int:
    den = 1
    for v in values:
        den = lcm(den, int(v.denominator))
    return den


def _left_envelope(PX, PY, QX, QY, keep_window: int = 0):
    """For each query (sorted by QX) the best slope (dy, dx) to a point with PX < qx.

    Points are integer pairs sorted by PX; maintains the lower convex hull of
    the processed prefix, queried by binary search for the tangent.
    """
    hx: List[int] = []
    hy: List[int] = []
    best: List = []
    windows: List = []
    p = 0
    n = len(PX)
    for qx, qy in zip(QX, QY):
        while p < n and PX[p] < qx:
            x2, y2 = PX[p], PY[p]
            if hx and hx[-1] == x2:
                p += 1
                continue
            while len(hx) >= 2 and (
                (hx[-1] - hx[-2]) * (y2 - hy[-2]) - (hy[-1] - hy[-2]) * (x2 - hx[-2]) <= 0
            ):
                hx.pop()
                hy.pop()
            hx.append(x2)
            hy.append(y2)
            p += 1
        if not hx:
            best.append(None)
            windows.append(None)
            continue
        lo, hi = 0, len(hx) - 1
        # first j with query not strictly above the line through h_j, h_{j+1}
        while lo < hi:
            mid = (lo + hi) // 2
            above = (hx[mid + 1] - hx[mid]) * (qy - hy[mid]) - (hy[mid + 1] - hy[mid]) * (
                qx - hx[mid]
            ) > 0
            if above:
                lo = mid + 1
            else:
                hi = mid
        best.append((qy - hy[lo], qx - hx[lo]))
        if keep_window:
            s = max(0, lo - keep_window)
            e = min(len(hx), lo + keep_window + 1)
            windows.append((hx[s:e], hy[s:e], s == 0, e == len(hx)))
        else:
            windows.append(None)
    return best, windows


def slope_envelope(points_x, points_y, query_x, query_y) -> List[Optional[mpq]]:
    """Exact ``max(sup_{p left of q} slope(p, q), sup_{p right of q} slope(q, p))``.

    Inputs are rationals; points sorted with ``points_x`` nondecreasing. A point
    with the same x as the query never counts. Returns ``None`` where no point
    qualifies on either side.
    """
    dx = _common_den(list(points_x) + list(query_x))
    dy = _common_den(list(points_y) + list(query_y))
    PX = [int(v * dx) for v in points_x]
    PY = [int(v * dy) for v in points_y]
    QX = [int(mpq(v) * dx) for v in query_x]
    QY = [int(mpq(v) * dy) for v in query_y]
    order = sorted(range(len(QX)), key=lambda i: QX[i])
    sx = [QX[i] for i in order]
    sy = [QY[i] for i in order]
    left, _ = _left_envelope(PX, PY, sx, sy)
    right, _ = _left_envelope(
        [-v for v in reversed(PX)], [-v for v in reversed(PY)],
        [-v for v in reversed(sx)], [-v for v in reversed(sy)],
    )
    right = list(reversed(right))
    out: List[Optional[mpq]] = [None] * len(QX)
    for pos, i in enumerate(order):
        cands = []
        for item in (left[pos], right[pos]):
            if item is not None:
                cands.append(mpq(item[0] * dx, item[1] * dy))
        out[i] = max(cands) if cands else None
    return out


def maximal_many(w: StepMeasure, xs: Sequence) -> List[mpq]:
    """Exact ``Mw`` at every point of ``xs``."""
    if len(w) == 0:
        raise ValueError("maximal function of an empty measure")
    pts = w.breakpoints()
    ys = [w.cdf(e) for e in pts]
    qx = [mpq(x) for x in xs]
    qy = [w.cdf(x) for x in qx]
    vals = slope_envelope(pts, ys, qx, qy)
    return [v if v is not None else mpq(0) for v in vals]


def maximal(w: StepMeasure, x) -> mpq:
    return maximal_many(w, [x])[0]


def maximal_oracle(w: StepMeasure, x, grid: int = 0) -> mpq:
    """Brute force over all candidate interval endpoint pairs."""
    x = mpq(x)
    pts = set(w.breakpoints()) | {x}
    if grid:
        lo, hi = min(pts), max(pts)
        pts |= {lo + (hi - lo) * mpq(i, grid) for i in range(grid + 1)}
    left = [p for p in pts if p <= x]
    right = [p for p in pts if p >= x]
    F = {p: w.cdf(p) for p in pts}
    best = mpq(0)
    for a in left:
        for b in right:
            if b > a:
                v = (F[b] - F[a]) / (b - a)
                if v > best:
                    best = v
    return best


def _as_measure(g) -> StepMeasure:
    if isinstance(g, StepMeasure):
        return g
    return StepMeasure(g)


def weighted_maximal_many(w: StepMeasure, g, xs: Sequence) -> List[mpq]:
    """Exact ``M_w g`` at each point; ``g`` a nonnegative step function."""
    g = _as_measure(g)
    gw = g.multiply(w)
    pts = sorted(set(w.breakpoints()) | set(g.breakpoints()))
    X = [w.cdf(e) for e in pts]
    Y = [gw.cdf(e) for e in pts]
    qx = [mpq(x) for x in xs]
    vals = slope_envelope(X, Y, [w.cdf(x) for x in qx], [gw.cdf(x) for x in qx])
    return [v if v is not None else mpq(0) for v in vals]


def weighted_maximal(w: StepMeasure, g, x) -> mpq:
    return weighted_maximal_many(w, g, [x])[0]


def weighted_maximal_oracle(w: StepMeasure, g, x) -> mpq:
    g = _as_measure(g)
    gw = g.multiply(w)
    x = mpq(x)
    pts = set(w.breakpoints()) | set(g.breakpoints()) | {x}
    best = mpq(0)
    for a in [p for p in pts if p <= x]:
        for b in [p for p in pts if p >= x]:
            if b > a:
                den = w.mass(a, b)
                if den > 0:
                    best = max(best, gw.mass(a, b) / den)
    return best


# ---------------------------------------------------------------------------
# float maximal functions from exact hull windows


def _tail_windows(PX, PY):
    """Per segment ``j -> j+1``: hull vertices that can be optimal left endpoints.

    As the query slides along the segment the optimal endpoint only moves
    left, so the hull tail from the tangent at the segment end suffices.
    Returns ``(starts, xs, ys)`` with candidate lists flattened.
    """
    hx: List[int] = []
    hy: List[int] = []
    starts = [0]
    cx: List[int] = []
    cy: List[int] = []
    n = len(PX)
    for j in range(n - 1):
        x2, y2 = PX[j], PY[j]
        if not hx or hx[-1] != x2:
            while len(hx) >= 2 and (
                (hx[-1] - hx[-2]) * (y2 - hy[-2]) - (hy[-1] - hy[-2]) * (x2 - hx[-2]) <= 0
            ):
                hx.pop()
                hy.pop()
            hx.append(x2)
            hy.append(y2)
        qx, qy = PX[j + 1], PY[j + 1]
        if qx > hx[-1]:
            lo, hi = 0, len(hx) - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if (hx[mid + 1] - hx[mid]) * (qy - hy[mid]) - (hy[mid + 1] - hy[mid]) * (qx - hx[mid]) > 0:
                    lo = mid + 1
                else:
                    hi = mid
            # candidates relative to the segment start
            cx.extend(x2 - v for v in hx[lo:])
            cy.extend(y2 - v for v in hy[lo:])
        starts.append(len(cx))
    return np.array(starts, dtype=np.int64), cx, cy


class SlopeEnvelope:
    """``max`` over chords of a polyline through a point moving on it, in float.

    The polyline has exact vertices ``(X, Y)``; a query is a segment index
    ``j`` and a parameter ``u`` in (0, 1). Candidate endpoints come from exact
    convex hulls, so only the final slope evaluation rounds.
    """

    def __init__(self, X: Sequence, Y: Sequence):
        dx = _common_den(X)
        dy = _common_den(Y)
        PX = [int(v * dx) for v in X]
        PY = [int(v * dy) for v in Y]
        n = len(PX)
        self.n = n
        self.dX = np.array([float(mpq(PX[j + 1] - PX[j], dx)) for j in range(n - 1)])
        self.dY = np.array([float(mpq(PY[j + 1] - PY[j], dy)) for j in range(n - 1)])
        ls, lx, ly = _tail_windows(PX, PY)
        rs, rx, ry = _tail_windows([-v for v in reversed(PX)], [-v for v in reversed(PY)])
        self.left = (ls, np.array([float(mpq(v, dx)) for v in lx]), np.array([float(mpq(v, dy)) for v in ly]))
        self.right = (rs, np.array([float(mpq(v, dx)) for v in rx]), np.array([float(mpq(v, dy)) for v in ry]))
        sizes = np.diff(ls)
        self.max_window = int(max(sizes.max(initial=0), np.diff(rs).max(initial=0)))

    @staticmethod
    def _side(win, seg, u, dX, dY):
        starts, cx, cy = win
        lo = starts[seg]
        cnt = starts[seg + 1] - lo
        out = np.full(len(seg), -np.inf)
        has = cnt > 0
        if not has.any():
            return out
        q = np.nonzero(has)[0]
        c = cnt[q]
        rep = np.repeat(q, c)
        offs = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        idx = np.repeat(lo[q], c) + offs
        vals = (cy[idx] + u[rep] * dY[rep]) / (cx[idx] + u[rep] * dX[rep])
        out[q] = np.maximum.reduceat(vals, np.r_[0, np.cumsum(c)[:-1]])
        return out

    def evaluate(self, seg, u) -> np.ndarray:
        seg = np.asarray(seg, dtype=np.int64)
        u = np.asarray(u, dtype=float)
        dX, dY = self.dX[seg], self.dY[seg]
        left = self._side(self.left, seg, u, dX, dY)
        rseg = self.n - 2 - seg
        right = self._side(self.right, rseg, 1.0 - u, dX, dY)
        return np.maximum(left, right)


def _locate(breaks: Sequence, xs: np.ndarray):
    fb = np.array([float(b) for b in breaks])
    seg = np.searchsorted(fb, xs, side="right") - 1
    seg = np.clip(seg, 0, len(fb) - 2)
    u = (xs - fb[seg]) / (fb[seg + 1] - fb[seg])
    return seg, u


def maximal_float(w: StepMeasure, xs) -> np.ndarray:
    """``Mw`` at float points (non-certified, candidates exact)."""
    xs = np.asarray(xs, dtype=float)
    pts = _padded_breakpoints(w, xs)
    env = SlopeEnvelope(pts, [w.cdf(e) for e in pts])
    seg, u = _locate(pts, xs)
    return env.evaluate(seg, u)


def _padded_breakpoints(w: StepMeasure, xs: np.ndarray) -> List[mpq]:
    """Breakpoints plus empty margins so every query lies inside a segment."""
    pts = w.breakpoints()
    lo = min(pts[0], mpq(math.floor(xs.min()))) - 1 if len(xs) else pts[0] - 1
    hi = max(pts[-1], mpq(math.ceil(xs.max()))) + 1 if len(xs) else pts[-1] + 1
    return [lo] + pts + [hi]


def maximal_envelope(w: StepMeasure, lo=-1, hi=2) -> Tuple[List[mpq], SlopeEnvelope]:
    """Reusable envelope for ``maximal_float`` on queries within ``[lo, hi]``."""
    pts = _padded_breakpoints(w, np.array([float(lo), float(hi)]))
    return pts, SlopeEnvelope(pts, [w.cdf(e) for e in pts])


def weighted_maximal_float(w: StepMeasure, g, xs) -> np.ndarray:
    """``M_w g`` at float points inside ``supp w`` (non-certified)."""
    g = _as_measure(g)
    gw = g.multiply(w)
    pts = sorted(set(w.breakpoints()) | set(g.breakpoints()))
    env = SlopeEnvelope([w.cdf(e) for e in pts], [gw.cdf(e) for e in pts])
    seg, u = _locate(pts, np.asarray(xs, dtype=float))
    return env.evaluate(seg, u)
