import math
import random

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings, strategies as st

from weakhilbert.measure import StepMeasure
from weakhilbert.operators import (
    UndefinedAtJump,
    hilbert_float,
    hilbert_pv,
    maximal,
    maximal_float,
    maximal_many,
    maximal_oracle,
    pv_quadrature_oracle,
    weighted_maximal,
    weighted_maximal_float,
    weighted_maximal_many,
    weighted_maximal_oracle,
)
from weakhilbert.triadic import companion_interval, middle_third

UNIFORM = StepMeasure([(0, 1, 1)])


@st.composite
def step_measures(draw, max_pieces=50):
    n = draw(st.integers(1, max_pieces))
    cuts = sorted(set(draw(st.lists(st.integers(0, 400), min_size=2 * n, max_size=2 * n))))
    if len(cuts) < 2:
        cuts = [0, 1]
    pieces = []
    for a, b in zip(cuts[::2], cuts[1::2]):
        d = draw(st.integers(1, 30))
        pieces.append((mpq(a, 100), mpq(b, 100), mpq(d, draw(st.integers(1, 7)))))
    return StepMeasure(pieces)


def random_measure(rng, n):
    cuts = sorted(rng.sample(range(1, 10**4), 2 * n))
    return StepMeasure(
        (mpq(a, 5000), mpq(b, 5000), mpq(rng.randint(1, 50), rng.randint(1, 9)))
        for a, b in zip(cuts[::2], cuts[1::2])
    )


# Hilbert transform ----------------------------------------------------------

def test_pv_examples():
    v = hilbert_pv(UNIFORM, mpq(1, 2))
    assert v.contains(0) and v.rad < 1e-30
    v = hilbert_pv(UNIFORM, 2)
    assert math.isclose(float(v), -math.log(2), rel_tol=1e-15)
    est, err = pv_quadrature_oracle(UNIFORM, mpq(1, 2))
    assert abs(est) < 1e-10
    est, err = pv_quadrature_oracle(UNIFORM, -1)
    assert abs(est - math.log(2)) < 1e-10


def test_pv_rejects_jump():
    with pytest.raises(UndefinedAtJump):
        hilbert_pv(UNIFORM, 1)


def test_pv_at_companion_centre(build):
    w1 = build(2, 1).weight
    J = middle_third(build(2, 1).K(1)[1])
    I = companion_interval(J, build(2, 1).signs.eps(J), 2)
    v = hilbert_pv(w1, I.center)
    est, err = pv_quadrature_oracle(w1, I.center)
    assert abs(float(v) - est) < 1e-8


def test_pv_against_quadrature_random(build):
    rng = random.Random(1)
    w = build(3, 2).weight
    bad = []
    for _ in range(100):
        j = rng.randrange(len(w))
        a, b, _ = w.pieces[j]
        x = a + (b - a) * mpq(rng.randint(1, 999), 1000)
        v = hilbert_pv(w, x)
        est, err = pv_quadrature_oracle(w, x)
        if abs(float(v) - est) > float(v.rad) + err + 1e-9 * max(1.0, abs(est)):
            bad.append((x, float(v), est, err))
    assert not bad


@given(step_measures(8), st.integers(-50, 450))
@settings(max_examples=60, deadline=None)
def test_linearity(w, num):
    x = mpq(2 * num + 1, 200)
    if x in w._endpoint_set():
        return
    half = len(w) // 2
    w1 = StepMeasure(w.pieces[:half])
    w2 = StepMeasure(w.pieces[half:])
    total = hilbert_pv(w, x)
    parts = (hilbert_pv(w1, x) if len(w1) else 0) + hilbert_pv(w2, x)
    assert total.overlaps(parts)


@given(step_measures(8), st.integers(-50, 450))
@settings(max_examples=60, deadline=None)
def test_antisymmetry(w, num):
    x = mpq(2 * num + 1, 200)
    if x in w._endpoint_set():
        return
    s = mpq(1, 2)
    v = hilbert_pv(w, x)
    r = hilbert_pv(w.reflect(s), 2 * s - x)
    assert v.overlaps(-r)


def test_precision_monotone(build):
    w = build(3, 1).weight
    x = mpq(17, 59)
    prev = None
    for prec in (64, 128, 256, 512):
        v = hilbert_pv(w, x, prec)
        if prev is not None:
            assert v.rad <= prev.rad
            assert abs(v.mid - prev.mid) <= prev.rad
        prev = v


def test_hilbert_float_matches_certified(build):
    w = build(3, 2).weight
    rng = np.random.default_rng(0)
    xs = [mpq(int(v), 10**6) for v in rng.integers(-200000, 1200000, 200)]
    xs = [x for x in xs if x not in w._endpoint_set()]
    f = hilbert_float(w, np.array([float(x) for x in xs]))
    ref = np.array([float(hilbert_pv(w, x)) for x in xs])
    assert np.allclose(f, ref, rtol=1e-9, atol=1e-9)


# maximal functions ----------------------------------------------------------

@pytest.mark.parametrize("x, expected", [(mpq(1, 2), 1), (2, mpq(1, 2)), (0, 1)])
def test_maximal_examples(x, expected):
    assert maximal(UNIFORM, x) == expected
    assert maximal_oracle(UNIFORM, x) == expected


def test_maximal_companion_example(build):
    c = build(2, 1)
    w1 = c.weight
    J = middle_third(c.K(1)[0])
    I = companion_interval(J, c.signs.eps(J), 2)
    x = middle_third(I).center
    val = maximal(w1, x)
    assert val == maximal_oracle(w1, x)
    assert val <= 7 * w1.density_at(x)


def test_maximal_equals_oracle_random():
    rng = random.Random(7)
    for _ in range(20):
        w = random_measure(rng, rng.randint(1, 50))
        xs = [mpq(rng.randint(-2000, 12000), 5000) for _ in range(50)]
        fast = maximal_many(w, xs)
        for x, v in zip(xs, fast):
            assert v == maximal_oracle(w, x)
            assert v >= w.density_at(x)


@given(step_measures(), st.lists(st.integers(-100, 500), min_size=1, max_size=10))
@settings(max_examples=40, deadline=None)
def test_maximal_equals_oracle_property(w, nums):
    xs = [mpq(n, 100) for n in nums]
    assert maximal_many(w, xs) == [maximal_oracle(w, x) for x in xs]


def test_maximal_float_close_to_exact(build):
    w = build(3, 2).weight
    rng = random.Random(3)
    xs = [mpq(rng.randint(-500, 1500), 1000) + mpq(1, 7919) for _ in range(300)]
    exact = np.array([float(v) for v in maximal_many(w, xs)])
    approx = maximal_float(w, np.array([float(x) for x in xs]))
    assert np.allclose(approx, exact, rtol=1e-11, atol=0)


def test_weighted_maximal_examples(build):
    w1 = build(2, 1).weight
    one = StepMeasure([(-10, 10, 1)])
    for x in (mpq(1, 2), mpq(2, 9), mpq(7, 27)):
        assert weighted_maximal(w1, one, x) == 1
    g = StepMeasure([(0, mpq(1, 3), 1)])
    v = weighted_maximal(w1, g, mpq(1, 2))
    assert v == weighted_maximal_oracle(w1, g, mpq(1, 2))
    assert 0 < v < 1


def test_weighted_maximal_random():
    rng = random.Random(11)
    for _ in range(10):
        w = random_measure(rng, rng.randint(1, 20))
        g = random_measure(rng, rng.randint(1, 10))
        xs = [w.lefts[j] + (w.rights[j] - w.lefts[j]) * mpq(rng.randint(1, 99), 100)
              for j in (rng.randrange(len(w)) for _ in range(15))]
        exact = weighted_maximal_many(w, g, xs)
        assert exact == [weighted_maximal_oracle(w, g, x) for x in xs]
        approx = weighted_maximal_float(w, g, np.array([float(x) for x in xs]))
        assert np.allclose(approx, [float(v) for v in exact], rtol=1e-11, atol=1e-14)
