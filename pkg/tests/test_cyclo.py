import cmath
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.cyclo import (
    CycNum,
    Phase,
    canonicalize,
    cyc_dot,
    cyclotomic_polynomial,
    lift_common,
    root_of_unity,
    to_complex,
)

ORDERS = [12, 36, 60, 84]

small_rationals = st.fractions(min_value=-20, max_value=20, max_denominator=12)


@st.composite
def cycnums(draw, order=None):
    n = order if order is not None else draw(st.sampled_from(ORDERS))
    terms = draw(st.lists(st.tuples(st.integers(0, n - 1), small_rationals), min_size=0, max_size=6))
    x = CycNum.zero(n)
    for k, c in terms:
        x = x + root_of_unity(n, k).scale(c)
    return x


def test_root_of_unity_basic():
    assert root_of_unity(12, 0) == 1
    for u in (3, 5, 7):
        i = root_of_unity(12 * u, 3 * u)
        assert i * i == -1
    assert root_of_unity(36, 7) * root_of_unity(36, 29) == 1


def test_sqrt3_squares_to_three():
    for u in (3, 5, 7, 9):
        n = 12 * u
        s3 = root_of_unity(n, u) + root_of_unity(n, -u)
        assert s3 * s3 == 3
        assert abs(s3.to_complex() - math.sqrt(3)) < 1e-12


def test_additive_inverse_and_conj():
    x = root_of_unity(60, 7) + root_of_unity(60, 11).scale(Fraction(2, 3))
    assert (x + (-x)).is_zero()
    for k in range(60):
        z = root_of_unity(60, k)
        assert z.conj() * z == 1
        assert z.conj() == root_of_unity(60, (60 - k) % 60)


def test_canonical_relations():
    for n in (2, 3, 12, 60):
        total = CycNum.zero(n)
        for k in range(n):
            total = total + root_of_unity(n, k)
        assert total.is_zero()
    # Phi_N evaluated at xi_N
    for n in (12, 60, 84):
        val = CycNum.zero(n)
        for k, c in enumerate(cyclotomic_polynomial(n)):
            val = val + root_of_unity(n, k).scale(c)
        assert val.is_zero()
    assert (CycNum.one(2) + root_of_unity(2, 1)).is_zero()


def test_canonical_form_unique():
    # xi^N and xi^0 give identical canonical vectors
    a = CycNum(60, [0] * 60 + [1])
    assert a == CycNum.one(60)
    assert canonicalize(a).coeffs == CycNum.one(60).coeffs
    assert len(a.coeffs) == 60


def test_cyclotomic_polynomial_small():
    assert cyclotomic_polynomial(1) == (-1, 1)
    assert cyclotomic_polynomial(4) == (1, 0, 1)
    assert cyclotomic_polynomial(12) == (1, 0, -1, 0, 1)
    for n in (12, 36, 60, 84, 108):
        phi = sum(1 for k in range(1, n + 1) if math.gcd(k, n) == 1)
        assert len(cyclotomic_polynomial(n)) - 1 == phi


def test_to_complex_examples():
    assert abs(root_of_unity(4, 1).to_complex() - 1j) < 1e-15
    assert to_complex(CycNum.zero(12)) == 0


def test_mismatched_orders_raise():
    with pytest.raises(ValueError):
        root_of_unity(12, 1) + root_of_unity(60, 1)
    a, b = lift_common(root_of_unity(12, 1), root_of_unity(20, 1))
    assert a.order == b.order == 60
    assert a == root_of_unity(60, 5)
    assert b == root_of_unity(60, 3)


def test_lift_preserves_value():
    x = root_of_unity(12, 5) + root_of_unity(12, 2).scale(3)
    y = x.lift(84)
    assert abs(x.to_complex() - y.to_complex()) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ORDERS).flatmap(lambda n: st.tuples(cycnums(n), cycnums(n), cycnums(n))))
def test_field_axioms(triple):
    a, b, c = triple
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a
    if not a.is_zero():
        assert a * a.inverse() == 1


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ORDERS).flatmap(
    lambda n: st.lists(st.integers(0, n - 1), min_size=1, max_size=10).map(lambda ks: (n, ks))))
def test_to_complex_homomorphism_on_units(data):
    n, ks = data
    prod = CycNum.one(n)
    expected = 1 + 0j
    for k in ks:
        prod = prod * root_of_unity(n, k)
        expected *= cmath.exp(2j * math.pi * k / n)
    assert abs(prod.to_complex() - expected) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ORDERS).flatmap(lambda n: st.tuples(cycnums(n), cycnums(n))))
def test_to_complex_matches_coefficients(pair):
    a, b = pair
    direct = sum(float(c) * cmath.exp(2j * math.pi * k / a.order) for k, c in enumerate(a.coeffs))
    assert abs(a.to_complex() - direct) < 1e-12
    assert abs((a * b).to_complex() - a.to_complex() * b.to_complex()) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(ORDERS).flatmap(lambda n: st.lists(st.tuples(cycnums(n), cycnums(n)), min_size=1, max_size=8)))
def test_dot_matches_naive(pairs):
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    naive = CycNum.zero(xs[0].order)
    for x, y in pairs:
        naive = naive + x * y
    assert cyc_dot(xs, ys) == naive


def test_galois_is_automorphism():
    n = 60
    a = root_of_unity(n, 3) + root_of_unity(n, 17).scale(2)
    b = root_of_unity(n, 11).scale(Fraction(1, 5)) + 1
    for m in (7, 17, 59):
        assert (a * b).galois(m) == a.galois(m) * b.galois(m)
        assert (a + b).galois(m) == a.galois(m) + b.galois(m)
    with pytest.raises(ValueError):
        a.galois(5)


def test_phase_embedding():
    for r in (Fraction(0), Fraction(1, 3), Fraction(-7, 12), Fraction(5, 84), Fraction(13, 10)):
        p = Phase(r)
        assert abs(p.to_cyc(60).to_complex() - cmath.exp(2j * math.pi * float(r))) < 1e-12
        assert abs(p.to_complex() - cmath.exp(2j * math.pi * float(r))) < 1e-12
    assert (Phase(Fraction(1, 3)) * Phase(Fraction(2, 3))).is_one()
    assert Phase(Fraction(5, 4)).value == Fraction(1, 4)


def test_str_form():
    assert str(CycNum.zero(12)) == "0"
    assert str(root_of_unity(12, 1)) == "1*z^1"
