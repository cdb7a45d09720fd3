import json

import pytest
from gmpy2 import mpq

from weakhilbert.operators import hilbert_pv, pv_quadrature_oracle
from weakhilbert.triadic import TriadicInterval, middle_third
from weakhilbert.verify import (
    ALL_CHECKS,
    StageGeometry,
    VerificationReport,
    check_intcompare,
    check_mwcompare,
    check_signs,
    check_term_bounds,
    companion_of,
    harmonic_floor,
    run_checks,
    sample_points,
    six_terms,
)


def close(v, ref, rel=1e-12, abs_=1e-13):
    return abs(float(v) - ref) <= rel * abs(ref) + abs_


def test_sample_points_deterministic():
    a = sample_points(0, 1, 5)
    assert a[:3] == [mpq(1, 2), mpq(1, 4), mpq(3, 4)]
    assert a == sample_points(0, 1, 5)
    assert all(0 < x < 1 for x in a)


def test_harmonic_floor():
    assert harmonic_floor(2) == mpq(1, 2) + mpq(1, 3) + mpq(1, 4)
    assert float(harmonic_floor(4)) > 2


def test_golden_terms_stage0(build):
    c = build(4, 2)
    geom = StageGeometry(c, 0)
    K = geom.Ks[0]
    I = companion_of(c, middle_third(K))
    assert (I.left, I.right) == (mpq(26, 81), mpq(1, 3))
    x = middle_third(I).center
    assert x == mpq(53, 162)
    tb = six_terms(geom, K, x)
    assert tb.w_at_x == mpq(81, 28)
    assert close(tb.a2, 11.320831278949218)
    for name in ("a1", "a3", "a4", "a5", "a6"):
        assert getattr(tb, name).contains(0)
    # a2 region-wise against quadrature over J
    est, err = pv_quadrature_oracle(c.weight.restrict(tb.J.left, tb.J.right), x)
    assert abs(float(tb.a2) - est) < 1e-9
    assert tb.total().overlaps(hilbert_pv(c.weight, x))


def test_golden_terms_stage1(build):
    c = build(4, 2)
    geom = StageGeometry(c, 1)
    K = TriadicInterval(-4, 40)
    assert (K.left, K.right) == (mpq(40, 81), mpq(41, 81))
    J = middle_third(K)
    assert c.signs.eps(J) == -1
    x = mpq(6589, 13122)
    tb = six_terms(geom, K, x)
    assert tb.w_at_x == mpq(6561, 784)
    assert tb.a1.contains(0) and tb.a6.contains(0)
    assert close(tb.a2, -32.74915767430259)
    assert close(tb.a3, 1.6270026567338902)
    assert close(tb.a4, -0.20672057437691932)
    assert close(tb.a5, -1.8017194154087996e-05, abs_=1e-17)
    assert tb.a2.sign() == c.signs.eps(J)
    w = c.weight
    est, _ = pv_quadrature_oracle(w.restrict(J.left, J.right), x)
    assert abs(float(tb.a2) - est) < 1e-9
    assert tb.total().overlaps(hilbert_pv(w, x))
    quad, err = pv_quadrature_oracle(w, x)
    assert abs(float(tb.total()) - quad) < 1e-9


def test_intcompare_k2_depth1(build):
    c = build(2, 1)
    rows = check_intcompare(c)
    assert rows and all(r.status == "pass" for r in rows)
    assert c.weight.density_at(mpq(2, 9)) == mpq(9, 4)
    for K in c.K(1):
        assert c.stages[1].mass(K) / K.length == mpq(9, 4)


def test_intcompare_detects_tampering(build):
    import copy
    from weakhilbert.measure import StepMeasure

    c = copy.copy(build(3, 2))
    w = c.weight
    a, b, d = w.pieces[0]
    c.stages = c.stages[:-1] + [StepMeasure([(a, b, d / 2)] + w.pieces[1:])]
    assert any(r.status == "fail" for r in check_intcompare(c))


@pytest.mark.parametrize("k, expected", [
    (2, mpq(459, 343)), (3, mpq(4131, 3127)), (4, mpq(37179, 28327)),
])
def test_mwcompare_regression(build, k, expected):
    rows, summary = check_mwcompare(build(k, 2))
    assert all(r.status == "pass" for r in rows)
    assert mpq(summary["max_ratio_exact"]) == expected


def test_term_bounds_k4(build):
    rows, stats = check_term_bounds(build(4, 2))
    assert rows and all(r.passed for r in rows)
    assert stats["min_a2_over_w"] >= 2
    assert stats["min_a2_over_w"] >= float(harmonic_floor(4)) - 0.25
    assert stats["max_a1_over_w"] <= 0.6932
    assert stats["max_a3_over_w"] < 1
    assert stats["max_oracle_rel_err"] < 1e-6


def test_literal_mode_checks(build):
    c = build(3, 2, "literal")
    rep = run_checks(c, samples=2)
    assert rep.passed, [r for r in rep.records if not r.passed][:3]


def test_signs_all_reproduced(build):
    rows, summary = check_signs(build(3, 2))
    assert all(r.passed for r in rows)


def test_report_sections_and_round_trip(build):
    c = build(3, 2)
    rep = run_checks(c, checks=("mwcompare",))
    assert rep.checks() == ["mwcompare"]
    full = run_checks(c)
    assert set(full.checks()) <= set(ALL_CHECKS)
    again = VerificationReport.from_dict(json.loads(full.dumps()))
    assert again.dumps() == full.dumps()
    assert full.passed
    with pytest.raises(ValueError):
        run_checks(c, checks=("bogus",))
