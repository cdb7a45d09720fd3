import pytest
from gmpy2 import mpq

from weakhilbert.measure import (
    ConstructionParams,
    StepMeasure,
    build_w0,
    build_weight,
    choose_sign,
    density_at,
    mass,
    refine_stage,
    SignTable,
)
from weakhilbert.operators import pv_quadrature_oracle
from weakhilbert.triadic import UNIT, companion_interval, middle_third


def Q(s):
    return mpq(s)


def test_step_measure_canonical_form():
    w = StepMeasure([(Q("1/2"), 1, 2), (0, Q("1/2"), 2), (2, 3, 1)])
    assert w.pieces == [(0, 1, 2), (2, 3, 1)]
    assert w.total_mass == 3
    assert w.mass(Q("1/2"), Q("5/2")) == Q("3/2")
    assert w.cdf(10) == 3 and w.cdf(-1) == 0
    with pytest.raises(ValueError):
        StepMeasure([(0, 1, 1), (Q("1/2"), 2, 1)])
    with pytest.raises(ValueError):
        StepMeasure([(0, 1, -1)])


def test_step_measure_algebra():
    a = StepMeasure([(0, 1, 1)])
    b = StepMeasure([(2, 3, 2)])
    s = a + b
    assert s.total_mass == 3
    assert s.reflect().pieces == [(-2, -1, 2), (0, 1, 1)]
    assert s.restrict(Q("1/2"), Q("5/2")).total_mass == Q("3/2")
    assert s.without([(0, 1)]) == b
    assert s.scaled(2).total_mass == 6
    assert a.multiply(StepMeasure([(Q("1/2"), 5, 3)])).pieces == [(Q("1/2"), 1, 3)]


@pytest.mark.parametrize("k, density, comp", [
    (2, Q("9/4"), (Q("2/9"), Q("3/9"))),
    (3, Q("27/10"), (Q("8/27"), Q("9/27"))),
])
def test_w0_examples(k, density, comp):
    w0, (key, entry) = build_w0(k)
    assert key == middle_third(UNIT)
    assert entry.eps == 1 and not entry.defaulted
    # the companion touches [1/3, 2/3) and carries the same density, so they merge
    assert w0.pieces == [(comp[0], Q("2/3"), density)]
    assert w0.mass(0, 1) == 1


@pytest.mark.parametrize("k", [2, 3, 5, 8])
def test_w0_mass_and_density(k):
    w0, _ = build_w0(k)
    assert w0.total_mass == 1
    assert w0.densities[0] == 1 / (Q("1/3") + mpq(1, 3**k))


def test_w0_literal_mode_support():
    w0, (key, _) = build_w0(2, "literal")
    assert key == UNIT
    assert w0.total_mass == 1
    comp = middle_third(companion_interval(UNIT, 1, 2))
    assert w0.density_at(comp.left) > 0


def test_density_and_mass_examples(build):
    c = build(2, 1)
    w0, w1 = c.stages
    assert density_at(w0, Q("1/2")) == Q("9/4")
    assert density_at(w0, Q("1/10")) == 0
    assert density_at(w1, Q("2/9")) == Q("9/4")
    assert density_at(w1, Q("5/18")) == Q("9/4")
    assert mass(w0, (0, 1)) == 1
    assert mass(w1, (Q("1/3"), Q("4/9"))) == Q("1/4")


def test_refine_example_density():
    params = ConstructionParams(2, 1)
    w0, (key, entry) = build_w0(2)
    signs = SignTable({key: entry})
    w1 = refine_stage(w0, 1, signs, params)
    assert density_at(w1, Q("10/27")) == Q("81/16")
    assert w1.mass(Q("1/3"), Q("4/9")) == Q("1/4")
    assert w1.total_mass == 1


def test_k2_depth1_pieces():
    # companions adjacent to their K^m with equal density are stored merged
    w, signs = build_weight(ConstructionParams(2, 1))
    assert len(w) == 4
    assert w.total_mass == 1
    assert w.pieces[0] == (Q("2/9"), Q("3/9"), Q("9/4"))
    assert len(signs) == 4 and signs.defaulted_count == 0


@pytest.mark.parametrize("k, pieces", [(3, 91), (4, 757)])
def test_piece_count_regression(build, k, pieces):
    assert len(build(k, 2).weight) == pieces


def test_first_refinement_sign_example(build):
    c = build(2, 2)
    w0 = c.stages[0]
    K = c.K(1)[0]
    J = middle_third(K)
    assert (K.left, K.right, J.left, J.right) == (Q("1/3"), Q("4/9"), Q("10/27"), Q("11/27"))
    eps, dec, defaulted = choose_sign(w0, 1, J, c.K(1), c.params)
    assert eps == c.signs.eps(J) and not defaulted
    assert dec.sign() == eps
    # the far-field part against a quadrature of w0 off the K's
    frozen = w0.without([(Q("1/3"), Q("2/3"))])
    assert frozen.pieces == [(Q("2/9"), Q("1/3"), Q("9/4"))]
    a4_quad, err = pv_quadrature_oracle(frozen, J.center)
    a4 = frozen.potential.evaluate(J.center)
    assert a4_quad < 0 and abs(float(a4) - a4_quad) < 1e-12
    ms = [w0.mass(Kp) for Kp in c.K(1)]
    a6 = sum(m / (Kp.center - J.center) for m, Kp in zip(ms, c.K(1)) if Kp != K)
    assert a6 > 0
    assert dec.overlaps(a4 + a6)


def test_sign_antisymmetry_under_reflection(build):
    c = build(3, 2)
    w1 = c.stages[1]
    ks = c.K(2)
    refl = w1.reflect()
    mirrored = list(reversed([type(K)(K.scale, 3 ** (-K.scale) - 1 - K.index) for K in ks]))
    for K in ks[:5]:
        J = middle_third(K)
        Jr = type(J)(J.scale, 3 ** (-J.scale) - 1 - J.index)
        _, d, _ = choose_sign(w1, 2, J, ks, c.params)
        _, dr, _ = choose_sign(refl, 2, Jr, mirrored, c.params)
        assert d.overlaps(-dr)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_companion_density_frozen(build, k):
    c = build(k, 2)
    for i, (js, ks) in enumerate(c.collections[1:], start=1):
        for K in ks:
            J = middle_third(K)
            I = companion_interval(J, c.signs.eps(J), k)
            d = c.stages[i].density_at(I.left)
            assert d == c.stages[i].mass(K) / (J.length + I.length)
            if i < c.params.depth:
                for later in c.stages[i + 1:]:
                    assert later.density_at(I.left) == d
                    assert later.mass(I.left, I.right) == d * I.length


@pytest.mark.parametrize("k", [2, 3, 4])
def test_conservation_all_stages(build, k):
    c = build(k, 2)
    for i in range(1, 3):
        assert c.stages[i].total_mass == 1
        for K in c.K(i):
            assert c.stages[i].mass(K) == c.stages[i - 1].mass(K)


def test_support_length_k4(build):
    c = build(4, 2)
    support = sum(b - a for a, b, _ in c.weight.pieces)
    companions = [companion_interval(middle_third(K), c.signs.eps(middle_third(K)), 4)
                  for i in (1, 2) for K in c.K(i)]
    middles = sum(middle_third(K).length for K in c.K(2))
    base_companion = mpq(1, 81)
    assert support == middles + sum(I.length for I in companions) + base_companion
    assert c.weight.total_mass == 1
