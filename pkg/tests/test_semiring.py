"""Semiring algebra: golden values and algebraic laws.

Law tests draw carrier elements whose float arithmetic is exact (small
dyadic rationals), so monoid/distributivity identities are asserted with
plain equality rather than tolerances. AVG multiplication draws at most
one payload-bearing factor per product, matching the single-payload rule
the engine guarantees by construction.
"""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanout_guard.errors import AnnotationProductError, KindMismatch, UnsupportedScale
from fanout_guard.semiring import (
    Annotation,
    SemiringKind,
    annotations_close,
    one,
    sr_add,
    sr_finalize,
    sr_mul,
    sr_scale,
    zero,
)

# dyadic values: n/8 with |n| <= 4096, exact under + and * at this scale
dyadic = st.integers(-4096, 4096).map(lambda n: n / 8)
nonneg_fraction = st.fractions(min_value=0, max_value=50)
pos_weight = st.fractions(min_value=0, max_value=3)


def annotations(kind):
    if kind is SemiringKind.COUNT:
        return nonneg_fraction.map(Annotation.count)
    if kind is SemiringKind.SUM_REAL:
        return dyadic.map(Annotation.sum_real)
    if kind is SemiringKind.AVG:
        # count-lifted by default; payload variants are drawn explicitly
        return st.tuples(st.integers(0, 64).map(float), st.just(0.0)).map(
            lambda cs: Annotation(SemiringKind.AVG, cs)
        )
    if kind is SemiringKind.MAX_TROPICAL:
        return st.one_of(st.just(float("-inf")), dyadic).map(Annotation.max_val)
    return st.one_of(st.just(float("inf")), dyadic).map(Annotation.min_val)


avg_payload = st.tuples(st.integers(0, 64).map(float), dyadic).map(
    lambda cs: Annotation(SemiringKind.AVG, cs)
)

ALL_KINDS = list(SemiringKind)
SCALABLE = [SemiringKind.COUNT, SemiringKind.SUM_REAL, SemiringKind.AVG]


# golden values ---------------------------------------------------------------

def test_add_examples():
    assert sr_add(Annotation.count(1), Annotation.count(3)) == Annotation.count(4)
    # Example 1: revenue totals from User and Ad View agree at 70
    assert sr_add(Annotation.sum_real(20), Annotation.sum_real(50)) == Annotation.sum_real(70)
    # tropical: max(1, ..., 1) = 1, in additive form max(0, 0) = 0
    assert sr_add(Annotation.max_val(0), Annotation.max_val(0)) == Annotation.max_val(0)


def test_mul_examples():
    # the partial-aggregation table: 1x2 and 3x1
    assert sr_mul(Annotation.count(1), Annotation.count(2)) == Annotation.count(2)
    assert sr_mul(Annotation.count(3), Annotation.count(1)) == Annotation.count(3)
    for x in (0.0, 20.0, -5.0):
        assert sr_mul(Annotation.sum_real(x), one(SemiringKind.SUM_REAL)) == Annotation.sum_real(x)


def test_avg_count_lift_product_matches_replication():
    """Oracle: replicating each of 2 rows (20 and 30) three times gives
    count 6 and sum 150; the pair product must agree."""
    rows = [20.0, 30.0]
    replicated = [v for v in rows for _ in range(3)]
    expected = (float(len(replicated)), float(sum(replicated)))
    got = sr_mul(Annotation.avg(2, 50), Annotation(SemiringKind.AVG, (3.0, 0.0)))
    assert got.value == expected == (6.0, 150.0)


def test_avg_double_payload_rejected():
    with pytest.raises(AnnotationProductError):
        sr_mul(Annotation.avg(1, 20), Annotation.avg(1, 30))


def test_kind_mismatch():
    with pytest.raises(KindMismatch):
        sr_add(Annotation.count(1), Annotation.sum_real(1))
    with pytest.raises(KindMismatch):
        sr_mul(Annotation.count(1), Annotation.sum_real(1))


def test_scale_examples():
    # Example 1 weight table: 20 x 0.5 and 50 x 1
    assert sr_scale(Annotation.sum_real(20), "0.5") == Annotation.sum_real(10)
    assert sr_scale(Annotation.sum_real(50), 1) == Annotation.sum_real(50)
    assert sr_scale(Annotation.count(4), 0) == zero(SemiringKind.COUNT)


def test_scale_tropical_rejected():
    with pytest.raises(UnsupportedScale):
        sr_scale(Annotation.max_val(5), "0.5")
    with pytest.raises(UnsupportedScale):
        sr_scale(Annotation.min_val(5), "0.5")


def test_finalize():
    # mean of any 4 values summing to 280 is 70
    values = [40.0, 60.0, 80.0, 100.0]
    assert sum(values) == 280 and len(values) == 4
    assert sr_finalize(Annotation.avg(4, 280)) == sum(values) / len(values) == 70
    assert sr_finalize(Annotation.avg(0, 0)) is None
    assert sr_finalize(zero(SemiringKind.MAX_TROPICAL)) is None
    assert sr_finalize(zero(SemiringKind.MIN_TROPICAL)) is None
    assert sr_finalize(Annotation.count(Fraction(7, 2))) == 3.5


def test_weight_coercion_is_exact():
    assert sr_scale(Annotation.count(1), "0.4") == Annotation.count(Fraction(2, 5))
    assert sr_scale(Annotation.count(1), 0.5) == Annotation.count(Fraction(1, 2))


# laws ------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ALL_KINDS, ids=[k.value for k in ALL_KINDS])
class TestSemiringLaws:
    @settings(max_examples=200)
    @given(data=st.data())
    def test_add_commutative_monoid(self, kind, data):
        a = data.draw(annotations(kind))
        b = data.draw(annotations(kind))
        c = data.draw(annotations(kind))
        assert sr_add(a, b) == sr_add(b, a)
        assert sr_add(sr_add(a, b), c) == sr_add(a, sr_add(b, c))
        assert sr_add(a, zero(kind)) == a

    @settings(max_examples=200)
    @given(data=st.data())
    def test_mul_commutative_monoid(self, kind, data):
        a = data.draw(annotations(kind))
        b = data.draw(annotations(kind))
        c = data.draw(annotations(kind))
        assert sr_mul(a, b) == sr_mul(b, a)
        assert sr_mul(sr_mul(a, b), c) == sr_mul(a, sr_mul(b, c))
        assert sr_mul(a, one(kind)) == a

    @settings(max_examples=200)
    @given(data=st.data())
    def test_distributive_and_annihilating(self, kind, data):
        a = data.draw(annotations(kind))
        b = data.draw(annotations(kind))
        c = data.draw(annotations(kind))
        assert sr_mul(a, sr_add(b, c)) == sr_add(sr_mul(a, b), sr_mul(a, c))
        assert sr_mul(a, zero(kind)) == zero(kind)


@given(a=avg_payload, b=annotations(SemiringKind.AVG), c=annotations(SemiringKind.AVG))
def test_avg_payload_laws(a, b, c):
    """With one payload factor the pair product stays associative,
    commutative, and distributive."""
    assert sr_mul(a, b) == sr_mul(b, a)
    assert sr_mul(sr_mul(a, b), c) == sr_mul(a, sr_mul(b, c))
    assert sr_mul(a, sr_add(b, c)) == sr_add(sr_mul(a, b), sr_mul(a, c))
    assert sr_mul(a, one(SemiringKind.AVG)) == a
    assert sr_mul(a, zero(SemiringKind.AVG)) == zero(SemiringKind.AVG)


@pytest.mark.parametrize("kind", SCALABLE, ids=[k.value for k in SCALABLE])
class TestScalingLaws:
    @settings(max_examples=200)
    @given(data=st.data())
    def test_scale_distributes_over_add(self, kind, data):
        a = data.draw(annotations(kind))
        b = data.draw(annotations(kind))
        w = data.draw(pos_weight)
        lhs = sr_scale(sr_add(a, b), w)
        rhs = sr_add(sr_scale(a, w), sr_scale(b, w))
        assert annotations_close(lhs, rhs, 1e-12)

    @settings(max_examples=200)
    @given(data=st.data())
    def test_scale_composes(self, kind, data):
        a = data.draw(annotations(kind))
        w1 = data.draw(pos_weight)
        w2 = data.draw(pos_weight)
        lhs = sr_scale(sr_scale(a, w1), w2)
        rhs = sr_scale(a, w1 * w2)
        assert annotations_close(lhs, rhs, 1e-12)

    @settings(max_examples=50)
    @given(data=st.data())
    def test_scale_identity_and_annihilation(self, kind, data):
        a = data.draw(annotations(kind))
        assert sr_scale(a, 1) == a
        assert sr_scale(a, 0) == zero(kind)
