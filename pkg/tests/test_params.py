"""Exact-arithmetic checks for parameter validation and the named pairs."""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hartreelab.params import (critical_exponent, validate, make_params,
                               Rejection, theta, named_pairs, pairs_table,
                               _conj)


F = Fraction


def test_critical_exponent_values():
    assert critical_exponent(5, 2, 2) == F(1, 2)
    assert critical_exponent(3, 3, 1) == F(3, 4)
    assert critical_exponent(4, 2, 2) == F(0)
    assert critical_exponent(3, 2, F("1.5")) == F(-1, 4)


def test_accepted_point_5_2_2():
    p = make_params(5, 2, 2)
    assert p.s_c == F(1, 2)
    assert p.theta == 1
    assert p.radial_ok


def test_accepted_point_3_3_1():
    p = make_params(3, 3, 1)
    assert p.s_c == F(3, 4)
    assert p.theta == F(1, 3)
    assert p.radial_ok


def test_rejections_carry_first_violation():
    r = validate(4, 2, 2)          # sits exactly on the lower edge
    assert isinstance(r, Rejection)
    assert not r
    assert "Np-N-gamma = 2 <= 2" in r.reason

    r = validate(3, 2, 2)
    assert "Np-N-gamma = 1 <= 2" in r.reason

    assert "p" in validate(3, F(3, 2), 1).reason
    assert "gamma" in validate(3, 2, 5).reason
    with pytest.raises(ValueError):
        make_params(4, 2, 2)


def test_theta_requires_subcritical_range():
    assert theta(make_params(5, 2, 2)) == 1
    with pytest.raises(ValueError):
        theta(F(3, 2))


def test_named_pairs_5_2_2_exact():
    pr = named_pairs(make_params(5, 2, 2))
    assert (pr["q1r1"].q, pr["q1r1"].r) == (F(8, 3), F(20, 7))
    assert (pr["q2r2"].q, pr["q2r2"].r) == (F(8), F(20, 9))
    assert (pr["L2_dual"].q, pr["L2_dual"].r) == (F(8, 5), F(20, 13))
    assert (pr["Hsc"].q, pr["Hsc"].r) == (F(8), F(20, 7))
    assert (pr["Hsc_dual"].q, pr["Hsc_dual"].r) == (F(8, 3), F(20, 13))
    assert pr["Hsc"].s == F(1, 2)
    assert pr["Hsc_dual"].s == -F(1, 2)


def test_dual_pairs_store_primed_exponents():
    pr = named_pairs(make_params(5, 2, 2))
    q, r = pr["L2_dual"].admissible_pair()
    assert q == _conj(F(8, 5)) == F(8, 3)
    assert r == _conj(F(20, 13)) == F(20, 7)


def test_relation_residuals_vanish_exactly():
    for point in [(5, 2, 2), (3, 3, 1), (3, F(5, 2), F(3, 2)), (2, 3, 1)]:
        params = make_params(*point)
        for pr in named_pairs(params).values():
            assert pr.relation_residual(params.N) == 0


def test_pairs_table_is_plain_data():
    rows = pairs_table(make_params(3, 3, 1))
    assert len(rows) == 5
    for row in rows:
        assert row["relation_residual"] == "0"
        assert isinstance(row["q"], str) and isinstance(row["in_range"], bool)


rationals = st.fractions(min_value=F(1, 40), max_value=100,
                         max_denominator=40)


@given(N=st.integers(min_value=1, max_value=8), p=rationals, g=rationals)
def test_acceptance_iff_s_c_strictly_between_0_and_1(N, p, g):
    out = validate(N, p, g)
    if out:
        assert 0 < out.s_c < 1
        assert out.p >= 2 and 0 < out.gamma < N
        assert out.theta == (1 - out.s_c) / out.s_c
    elif p >= 2 and 0 < g < N:
        # in-domain rejections must come from the inter-range condition
        s_c = critical_exponent(N, p, g)
        assert not (0 < s_c < 1)


@given(N=st.integers(min_value=2, max_value=8), g=rationals,
       p1=rationals, p2=rationals)
def test_critical_exponent_monotone_in_p(N, g, p1, p2):
    if not (0 < g < N) or p1 == 1 or p2 == 1:
        return
    lo, hi = sorted([max(p1, F(11, 10)), max(p2, F(11, 10))])
    assert critical_exponent(N, lo, g) <= critical_exponent(N, hi, g)


@given(N=st.integers(min_value=1, max_value=8), p=rationals, g=rationals)
def test_range_flags_are_booleans_and_boundaries_tagged(N, p, g):
    out = validate(N, p, g)
    if not out:
        return
    for pr in named_pairs(out).values():
        assert isinstance(pr.in_range, bool)
        for tag in pr.boundary:
            assert "=" in tag
