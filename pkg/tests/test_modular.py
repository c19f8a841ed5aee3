import cmath
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.cyclo import CycNum, Phase, lift_common, root_of_unity
from artifact.modular import (
    NumericGamma, PoleError, RelaxedLabel, bp_entry, bp_s_squared_permutation, bp_smatrix,
    bp_tmatrix, check_galois_permutation, check_galois_relation, galois_apply, galois_permutation,
    hw_skernel, relaxed_skernel, relaxed_skernel_factorised, semirelaxed_skernel, sl3_adm_smatrix,
    sl3_adm_smatrix_full, sl3_tmatrix, vacuum_skernel_cosine, wzw_entry, wzw_smatrix,
)
from artifact.weights import (
    ALPHA1, ALPHA2, ALPHA3, CW0, CW1, CW2, CW3, IDENTITY, OMEGA3, RHO, S1, S2, S3, WEYL_GROUP,
    AffineWeight, Coweight, FiniteWeight, GammaCoset, OMEGA1, WeylElement, admissible_weights, bilinear,
    bp_charge,
    c_bp, c_sl, dynkin, enumerate_P, gamma_rep, identify_admissible, level, nabla, vacuum,
)


def _phase(u, r):
    n = 12 * u
    assert (r * n).denominator == 1
    return root_of_unity(n, int(r * n))


# --- S matrices ----------------------------------------------------------------

@pytest.mark.parametrize("u", [3, 5, 7])
def test_unitary_and_symmetric(u):
    for s in (wzw_smatrix(u), bp_smatrix(u)):
        assert s.is_unitary()
        assert s.is_symmetric()


def test_wzw_even_levels_unitary():
    for u in (4, 6):
        s = wzw_smatrix(u)
        assert s.size == (u - 1) * (u - 2) // 2
        assert s.is_unitary()


def test_trivial_models():
    assert wzw_smatrix(3).entries == [[1]]
    assert bp_smatrix(3).entries == [[1]]


def test_wzw_affine_weyl_extension():
    u = 5
    labels = enumerate_P(u)
    for lam in labels:
        lf = lam.finite()
        for lamp in labels:
            base = wzw_entry(u, lf, lamp.finite())
            for w in WEYL_GROUP:
                assert wzw_entry(u, w.act_shifted(lf), lamp.finite()) == base.scale(w.det)
                assert wzw_entry(u, lf, w.act_shifted(lamp.finite())) == base.scale(w.det)
            # level-u translations by coroots
            for root in (ALPHA1, ALPHA2, ALPHA3):
                assert wzw_entry(u, lf + root * u, lamp.finite()) == base


def test_sl3_admissible_smatrix_unitary():
    s = sl3_adm_smatrix_full(3)
    assert s.size == 4
    assert s.is_unitary()
    assert s.is_symmetric()


def test_sl3_admissible_smatrix_u5():
    s = sl3_adm_smatrix_full(5)
    assert s.size == 24
    assert s.is_symmetric()
    assert s.is_unitary()


def test_sl3_admissible_rejects_non_admissible():
    with pytest.raises(ValueError):
        sl3_adm_smatrix(5, AffineWeight(1, 1, 1), admissible_weights(5)[0])


# --- T matrices ----------------------------------------------------------------

def _s0_shifted(u, weight):
    # s0 . nu: finite part shifts by (nu_0 + 1) alpha3, level unchanged
    fin = weight.finite() + ALPHA3 * (weight.l0 + 1)
    return AffineWeight.from_finite(fin, level(u))


def test_t_identities_u5():
    u = 5
    for nu in admissible_weights(u):
        t = sl3_tmatrix(u, nu)
        assert abs(abs(t.to_complex()) - 1) < 1e-12
        s0nu = _s0_shifted(u, nu.weight)
        fin = nu.weight.finite()
        assert sl3_tmatrix(u, s0nu, strict=False) == t * Phase(Fraction(u, 2) - bilinear(fin, ALPHA3))
        assert sl3_tmatrix(u, nabla(nu.weight)) == t * Phase(Fraction(u, 6) - bilinear(fin, OMEGA1))


@pytest.mark.parametrize("u", [3, 5, 7])
def test_vacuum_t_matches_central_charge(u):
    vac = admissible_weights(u)[enumerate_P(u).index(vacuum(u))]
    assert vac.weight == AffineWeight(level(u), 0, 0)
    assert sl3_tmatrix(u, vac) == Phase(-c_sl(u) / 24)


def test_bp_t():
    assert c_bp(3) == 0
    assert bp_tmatrix(3, vacuum(3)).is_one()
    assert c_bp(5) == Fraction(-8, 5)
    for u in (5, 7):
        assert bp_tmatrix(u, vacuum(u)) == Phase(-c_bp(u) / 24)


# --- Galois ----------------------------------------------------------------

@pytest.mark.parametrize("u", [3, 5, 7, 9])
def test_galois_prefactor(u):
    n = 12 * u
    i = root_of_unity(n, 3 * u)
    sqrt3 = root_of_unity(n, u) + root_of_unity(n, -u)
    assert galois_apply(i, u) == i.scale((-1) ** ((u - 1) // 2))
    assert galois_apply(sqrt3, u) == sqrt3.scale((-1) ** ((u + 1) // 2))
    pre = (-i) * sqrt3.scale(Fraction(1, 3 * u))
    assert galois_apply(pre, u) == -pre


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 59), min_size=2, max_size=6), st.lists(st.integers(-5, 5), min_size=2, max_size=6))
def test_galois_is_ring_automorphism(ks, cs):
    u = 5
    a = sum((root_of_unity(60, k).scale(c) for k, c in zip(ks, cs)), CycNum.zero(60))
    b = root_of_unity(60, ks[0]) + root_of_unity(60, ks[-1]).scale(3)
    assert galois_apply(a * b, u) == galois_apply(a, u) * galois_apply(b, u)
    assert galois_apply(a + b, u) == galois_apply(a, u) + galois_apply(b, u)


@pytest.mark.parametrize("u", [3, 5, 7])
def test_galois_permutation_and_relation(u):
    perm = galois_permutation(u)
    assert sorted(l.key() for l in perm.pi.values()) == sorted(l.key() for l in enumerate_P(u))
    assert set(perm.eps.values()) <= {1, -1}
    assert check_galois_permutation(u, perm)
    assert check_galois_relation(u)


def test_other_galois_candidate_available():
    x = root_of_unity(60, 1)
    assert galois_apply(x, 5, "9u+2") == root_of_unity(60, 47)


# --- BP symmetry identities -----------------------------------------------------

@pytest.mark.parametrize("u", [5, 7])
def test_bp_nabla_and_dynkin_identities(u):
    labels = enumerate_P(u)
    for a in labels:
        for b in labels:
            s = bp_entry(u, a, b)
            for n in range(-2, 3):
                lhs = bp_entry(u, a.nabla(n), b)
                assert lhs == s * _phase(u, -n * (bp_charge(b) - Fraction(u, 3)))
            assert bp_entry(u, dynkin(a), dynkin(b)) == s * _phase(u, bp_charge(a) + bp_charge(b))


def test_s_squared_reported():
    # open question: report whether S^2 is the conjugation permutation; no assertion on the outcome
    perm = bp_s_squared_permutation(5)
    assert perm is None or set(perm) == set(enumerate_P(5))


# --- relaxed kernels -----------------------------------------------------------

def _rand_coset(rng, den=7):
    return GammaCoset.from_root_coords(Fraction(rng.randrange(den), den), Fraction(rng.randrange(den), den))


def _rand_label(rng, u, den=7):
    return RelaxedLabel(Coweight(rng.randint(-2, 2), rng.randint(-2, 2)),
                        rng.choice(enumerate_P(u)), _rand_coset(rng, den))


def test_relaxed_kernel_unflowed_is_bp():
    u = 5
    rng = random.Random(1)
    for _ in range(10):
        a, b = rng.choice(enumerate_P(u)), rng.choice(enumerate_P(u))
        k = relaxed_skernel(u, RelaxedLabel(CW0, a, _rand_coset(rng)), RelaxedLabel(CW0, b, _rand_coset(rng)))
        assert k.exact == bp_entry(u, a, b)


def test_relaxed_kernel_factorised_cross_check():
    rng = random.Random(2)
    for u in (3, 5, 7):
        for _ in range(25):
            row, col = _rand_label(rng, u), _rand_label(rng, u)
            exact = relaxed_skernel(u, row, col).exact.to_complex()
            assert abs(exact - relaxed_skernel_factorised(u, row, col)) < 1e-10


def test_relaxed_kernel_symmetric():
    rng = random.Random(3)
    u = 5
    for _ in range(20):
        row, col = _rand_label(rng, u), _rand_label(rng, u)
        assert relaxed_skernel(u, row, col).exact == relaxed_skernel(u, col, row).exact


def test_relaxed_kernel_u3_pure_phase():
    rng = random.Random(4)
    for _ in range(10):
        row, col = _rand_label(rng, 3), _rand_label(rng, 3)
        val = relaxed_skernel(3, row, col).exact
        phase = -(row.g.pair_coweight(col.g) * Fraction(3, 2) + row.g.pair(col.gamma.rep) + col.g.pair(row.gamma.rep))
        assert abs(val.to_complex() - cmath.exp(2j * math.pi * float(phase))) < 1e-12


def test_relaxed_kernel_numeric_path():
    u = 5
    rng = random.Random(5)
    row = _rand_label(rng, u)
    col = _rand_label(rng, u)
    c1, c2 = col.gamma.root_coords()
    num_col = RelaxedLabel(col.g, col.lam, NumericGamma(float(c1), float(c2)))
    assert abs(relaxed_skernel(u, row, num_col).numeric - relaxed_skernel(u, row, col).exact.to_complex()) < 1e-10


# --- semirelaxed kernels ----------------------------------------------------------

def _semi_row(rng, u, g=None):
    lam = rng.choice(enumerate_P(u))
    nu = Fraction(rng.randrange(7), 7)
    gamma = GammaCoset(gamma_rep(u, lam, 0, nu))
    return RelaxedLabel(g or Coweight(rng.randint(-1, 1), rng.randint(-1, 1)), lam, gamma)


def test_semirelaxed_geometric_identity():
    u = 5
    rng = random.Random(6)
    for w in WEYL_GROUP:
        for _ in range(4):
            row, col = _semi_row(rng, u), _rand_label(rng, u, den=11)
            semi = semirelaxed_skernel(u, w, row, col)
            theta = w.act_coweight(CW3).pair(col.gamma.rep) + bp_charge(col.lam) - Fraction(u, 3)
            factor = 1 + Phase(-theta).to_cyc()
            twisted = RelaxedLabel(row.g, row.lam, row.gamma.weyl(w))
            relaxed = relaxed_skernel(u, twisted, col).exact
            a, b, c = lift_common(semi.exact, factor, relaxed)
            assert a * b == c
            assert semi.cleared() == relaxed


def test_semirelaxed_identity_twist_is_untwisted():
    u = 5
    rng = random.Random(7)
    row, col = _semi_row(rng, u), _rand_label(rng, u)
    assert semirelaxed_skernel(u, IDENTITY, row, col).exact == semirelaxed_skernel(u, WeylElement(()), row, col).exact


def test_semirelaxed_partial_sums():
    u = 5
    rng = random.Random(8)
    for w in (IDENTITY, S1, S3):
        row = _semi_row(rng, u)
        col = RelaxedLabel(Coweight(1, -1), enumerate_P(u)[2], NumericGamma(0.3141, 0.2718))
        semi = semirelaxed_skernel(u, w, row, col).numeric
        wg3 = w.act_coweight(CW3)
        w3 = w.act(OMEGA3)
        base = row.gamma.weyl(w)
        partial = 0j
        diffs = []
        for n in range(51):
            shifted = RelaxedLabel(row.g + wg3 * n, row.lam.nabla(n), base - w3 * (Fraction(n * u, 2)))
            partial += (-1) ** n * relaxed_skernel(u, shifted, col).numeric
            diffs.append(partial - semi)
        mags = [abs(d) for d in diffs]
        assert max(mags) - min(mags) < 1e-9
        theta = col.gamma.pair(wg3) + float(bp_charge(col.lam)) - u / 3
        ratio = -cmath.exp(-2j * math.pi * theta)
        for d0, d1 in zip(diffs, diffs[1:]):
            assert abs(d1 - d0 * ratio) < 1e-9


def test_semirelaxed_pole_locus():
    u = 5
    rng = random.Random(9)
    row = _semi_row(rng, u)
    lamp = enumerate_P(u)[1]
    # choose gamma' with <w3^, gamma'> + j' - u/3 = 1/2
    target = Fraction(1, 2) - bp_charge(lamp) + Fraction(u, 3)
    col = RelaxedLabel(CW0, lamp, GammaCoset.from_root_coords(target, 0))
    k = semirelaxed_skernel(u, IDENTITY, row, col)
    assert k.is_pole()
    with pytest.raises(PoleError):
        k.exact
    col2 = RelaxedLabel(CW0, lamp, GammaCoset.from_root_coords(target + Fraction(1, 7), 0))
    assert not semirelaxed_skernel(u, IDENTITY, row, col2).is_pole()


def test_semirelaxed_rejects_bad_row():
    u = 5
    lam = enumerate_P(u)[0]
    bad = GammaCoset(gamma_rep(u, lam, 0, 0) + FiniteWeight(Fraction(1, 7), 0))
    with pytest.raises(ValueError):
        semirelaxed_skernel(u, IDENTITY, RelaxedLabel(CW0, lam, bad), RelaxedLabel(CW0, lam, bad))


# --- highest-weight kernels -------------------------------------------------------

def test_vacuum_kernel_cosine_form():
    u = 5
    rng = random.Random(10)
    checked = 0
    while checked < 100:
        col = _rand_label(rng, u, den=rng.choice([5, 7, 9, 11]))
        k = hw_skernel(u, "vacuum", CW0, vacuum(u), col)
        if k.is_pole():
            continue
        assert abs(k.numeric - vacuum_skernel_cosine(u, col)) < 1e-10
        checked += 1


def test_vacuum_is_flow_of_lambda2():
    u = 5
    rng = random.Random(11)
    for _ in range(10):
        col = _rand_label(rng, u)
        a = hw_skernel(u, "vacuum", CW0, vacuum(u), col)
        b = hw_skernel(u, "Lambda2", -CW2, vacuum(u), col)
        if not a.is_pole():
            assert a.exact == b.exact


def test_hw_cleared_equals_relaxed():
    u = 5
    rng = random.Random(12)
    from artifact.weights import gamma1_rep
    for _ in range(10):
        lam = rng.choice(enumerate_P(u))
        g = Coweight(rng.randint(-1, 1), rng.randint(-1, 1))
        col = _rand_label(rng, u)
        k = hw_skernel(u, "Lambda2", g, lam, col)
        row = RelaxedLabel(g, lam, GammaCoset(gamma1_rep(u, lam)))
        assert k.cleared() == relaxed_skernel(u, row, col).exact


def test_vacuum_u3_prior_form():
    rng = random.Random(13)
    for _ in range(20):
        col = _rand_label(rng, 3, den=13)
        k = hw_skernel(3, "vacuum", CW0, vacuum(3), col)
        a, b, c = (float(col.gamma.pair_mod1(h)) for h in (CW1, CW2, CW3))
        den = 2 * (1 + math.cos(2 * math.pi * a) + math.cos(2 * math.pi * b) + math.cos(2 * math.pi * c))
        if abs(den) < 1e-9:
            continue
        assert abs(k.numeric - 1 / den) < 1e-10


def test_lambda1_two_routes_agree():
    # route A (used by hw_skernel): [s1(S^lam_{gamma2})] - [sigma^{w3^} L(lam - u w0/2)]
    # route B: [s1 s3(S^lam_{gamma1})] - [sigma^{-alpha2^} L(Lambda2_lam)]
    u = 5
    rng = random.Random(14)
    from artifact.weights import gamma1_rep
    checked = 0
    while checked < 20:
        lam = rng.choice(enumerate_P(u))
        g = Coweight(rng.randint(-1, 1), rng.randint(-1, 1))
        col = _rand_label(rng, u, den=rng.choice([7, 11]))
        a = hw_skernel(u, "Lambda1", g, lam, col)
        semi = semirelaxed_skernel(u, S1 * S3, RelaxedLabel(g, lam, GammaCoset(gamma1_rep(u, lam))), col)
        l2 = hw_skernel(u, "Lambda2", g - Coweight(-1, 2), lam, col)
        if a.is_pole() or semi.is_pole() or l2.is_pole():
            continue
        assert abs(a.numeric - (semi.numeric - l2.numeric)) < 1e-9
        checked += 1


def test_family_variants_follow_flow_dictionary():
    u = 5
    rng = random.Random(15)
    for _ in range(10):
        lam = rng.choice(enumerate_P(u))
        g = Coweight(rng.randint(-1, 1), rng.randint(-1, 1))
        col = _rand_label(rng, u)
        if hw_skernel(u, "Lambda2", g, lam, col).is_pole():
            continue
        # sigma^{-w2^} L(Lambda2_lam) = L(lam - u w0/2)
        assert hw_skernel(u, "omega0", g, lam, col).exact == hw_skernel(u, "Lambda2", g - CW2, lam, col).exact
        # sigma^{w3^} L(Lambda2_{nabla lam}) = L(lam - u w1/2)
        assert hw_skernel(u, "omega1", g, lam, col).exact == hw_skernel(u, "Lambda2", g + CW3, nabla(lam), col).exact
