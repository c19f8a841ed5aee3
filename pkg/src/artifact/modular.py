"""Modular S and T data for the sl(3) minimal models at denominator 2 and
their Bershadsky-Polyakov reductions.

Matrix entries live in Q(xi) with xi = exp(2 pi i / 12u).  A pairing
<x, y> of weights lies in (1/3)Z, so exp(-2 pi i m <x, y> / u) is the power
xi^(-12 m <x, y>), always an integer power.

Kernels indexed by relaxed labels (g, lambda, [gamma]) are exact whenever the
gamma data are rational; otherwise they are evaluated as complex floats.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Union

from .cyclo import CycNum, Phase, cyc_dot, lift_common
from .weights import (
    CW1, CW2, CW3, IDENTITY, ON_WALL, RHO, S1, WEYL_GROUP,
    AdmissibleWeight, AffineWeight, Coweight, FiniteWeight, GammaCoset, WeylElement,
    alcove_reduce, bilinear, bp_charge, bp_weight, c_bp, enumerate_P, gamma1_rep,
    gamma2_rep, identify_admissible, level, semirelaxed_condition, vacuum, admissible_weights,
)

__all__ = [
    "SMatrix", "NumericGamma", "RelaxedLabel", "DenominatorFactor", "KernelTerm",
    "SKernelValue", "PoleError", "GaloisPermutation",
    "wzw_entry", "bp_entry", "wzw_smatrix", "bp_smatrix", "sl3_adm_smatrix",
    "sl3_adm_smatrix_full", "sl3_tmatrix", "bp_tmatrix", "galois_apply",
    "galois_exponent", "galois_permutation", "check_galois_permutation",
    "check_galois_relation", "bp_s_squared_permutation", "relaxed_skernel",
    "relaxed_skernel_factorised", "semirelaxed_skernel", "hw_skernel",
    "vacuum_skernel_cosine", "HW_VARIANTS",
]

Number = Union[CycNum, complex]
NUMERIC_TOL = 1e-10


def _order(u: int) -> int:
    return 12 * u


@lru_cache(maxsize=None)
def _prefactor(u: int, sign: int) -> CycNum:
    """sign * i / (sqrt(3) u), with i = xi^{3u} and sqrt(3) = xi^u + xi^{-u}."""
    n = _order(u)
    i = CycNum.root_of_unity(n, 3 * u)
    sqrt3 = CycNum.root_of_unity(n, u) + CycNum.root_of_unity(n, -u)
    # 1/sqrt(3) = sqrt(3)/3
    return (i * sqrt3).scale(Fraction(sign, 3 * u))


def _weyl_sum(u: int, a: FiniteWeight, b: FiniteWeight, mult: int) -> CycNum:
    """sum_w det(w) exp(-2 pi i mult <w(a), b> / u), for a, b shifted weights."""
    n = _order(u)
    dense = [0] * n
    for w in WEYL_GROUP:
        e = -12 * mult * bilinear(w.act(a), b)
        if e.denominator != 1:
            raise ValueError("pairing is not in (1/3)Z")
        dense[int(e) % n] += w.det
    return CycNum._from_dense(n, dense)


def wzw_entry(u: int, lam: FiniteWeight, lamp: FiniteWeight) -> CycNum:
    """The level-(u-3) sl(3) S-matrix formula evaluated at any two integral weights."""
    return _prefactor(u, -1) * _weyl_sum(u, lam + RHO, lamp + RHO, 1)


def bp_entry(u: int, lam: AffineWeight, lamp: AffineWeight) -> CycNum:
    n = _order(u)
    phase = bp_charge(lam) + bp_charge(lamp) - Fraction(u, 3)
    ph = CycNum.root_of_unity(n, int(phase * n))
    return _prefactor(u, 1) * ph * _weyl_sum(u, lam.finite() + RHO, lamp.finite() + RHO, 2)


@dataclass
class SMatrix:
    """Square matrix of CycNums indexed by label lists."""

    rows: list
    cols: list
    entries: list[list[CycNum]]

    def __post_init__(self):
        if len(self.entries) != len(self.rows) or any(len(r) != len(self.cols) for r in self.entries):
            raise ValueError("shape mismatch")

    @property
    def size(self) -> int:
        return len(self.rows)

    def entry(self, a, b) -> CycNum:
        return self.entries[self.rows.index(a)][self.cols.index(b)]

    def transpose(self) -> "SMatrix":
        n = len(self.rows)
        m = len(self.cols)
        return SMatrix(list(self.cols), list(self.rows),
                       [[self.entries[i][j] for i in range(n)] for j in range(m)])

    def dagger(self) -> "SMatrix":
        t = self.transpose()
        return SMatrix(t.rows, t.cols, [[x.conj() for x in row] for row in t.entries])

    def __matmul__(self, other: "SMatrix") -> "SMatrix":
        cols = [[other.entries[i][j] for i in range(len(other.rows))] for j in range(len(other.cols))]
        out = [[cyc_dot(row, col) for col in cols] for row in self.entries]
        return SMatrix(list(self.rows), list(other.cols), out)

    def is_identity(self) -> bool:
        return all((x == (1 if i == j else 0)) for i, row in enumerate(self.entries) for j, x in enumerate(row))

    def is_unitary(self) -> bool:
        return (self @ self.dagger()).is_identity()

    def is_symmetric(self) -> bool:
        n = len(self.rows)
        return self.rows == self.cols and all(
            self.entries[i][j] == self.entries[j][i] for i in range(n) for j in range(i + 1, n))

    def to_complex(self) -> list[list[complex]]:
        return [[x.to_complex() for x in row] for row in self.entries]


@lru_cache(maxsize=None)
def _wzw_matrix(u: int) -> SMatrix:
    labels = enumerate_P(u)
    return SMatrix(labels, labels, [[wzw_entry(u, a.finite(), b.finite()) for b in labels] for a in labels])


@lru_cache(maxsize=None)
def _bp_matrix(u: int) -> SMatrix:
    if u % 2 == 0:
        raise ValueError("the BP minimal models need odd u")
    labels = enumerate_P(u)
    return SMatrix(labels, labels, [[bp_entry(u, a, b) for b in labels] for a in labels])


def wzw_smatrix(u: int) -> SMatrix:
    """S-matrix of the rational sl(3) model at level u-3, over P^{u-3}."""
    return _wzw_matrix(u)


def bp_smatrix(u: int) -> SMatrix:
    return _bp_matrix(u)


@lru_cache(maxsize=None)
def _bp_complex(u: int) -> tuple[tuple[complex, ...], ...]:
    return tuple(tuple(row) for row in _bp_matrix(u).to_complex())


def _bp_index(u: int, lam: AffineWeight) -> int:
    return enumerate_P(u).index(lam)


# ---------------------------------------------------------------------------
# admissible sl(3) data
# ---------------------------------------------------------------------------

def _check_admissible(u: int, mu) -> AdmissibleWeight:
    if isinstance(mu, AdmissibleWeight):
        return mu
    found = identify_admissible(u, mu)
    if found is None:
        raise ValueError(f"{mu} is not admissible for u={u}")
    return found


def sl3_adm_smatrix(u: int, mu, nu) -> CycNum:
    """Entry of the admissible-level sl(3) S-matrix (denominator 2)."""
    mu = _check_admissible(u, mu)
    nu = _check_admissible(u, nu)
    n = _order(u)
    mi, ni = mu.mu_I.finite() + RHO, nu.mu_I.finite() + RHO
    mf, nf = mu.mu_F, nu.mu_F
    phase = bilinear(mi, nf) + bilinear(mf, ni) - bilinear(mf, nf) * Fraction(u, 2)
    ph = CycNum.root_of_unity(n, int(phase * n))
    sign = mu.y.det * nu.y.det
    pre = _prefactor(u, -1).scale(Fraction(sign, 2))
    return pre * ph * _weyl_sum(u, mi, ni, 2)


@lru_cache(maxsize=None)
def sl3_adm_smatrix_full(u: int) -> SMatrix:
    labels = admissible_weights(u)
    return SMatrix(labels, labels, [[sl3_adm_smatrix(u, a, b) for b in labels] for a in labels])


def sl3_tmatrix(u: int, mu, strict: bool = True) -> Phase:
    """exp(-2 pi i / 3) exp(pi i |mu + rho|^2 * 2/u).

    With strict=False the formula is evaluated on any affine weight.
    """
    if isinstance(mu, AdmissibleWeight):
        fin = mu.weight.finite()
    else:
        if strict:
            _check_admissible(u, mu)
        fin = mu.finite()
    return Phase(Fraction(-1, 3) + (fin + RHO).norm2() / u)


def bp_tmatrix(u: int, lam: AffineWeight) -> Phase:
    return Phase(bp_weight(u, lam).Delta - c_bp(u) / 24)


# ---------------------------------------------------------------------------
# Galois symmetry
# ---------------------------------------------------------------------------

def galois_exponent(u: int, candidate: str = "3u+2") -> int:
    """The exponent a of xi -> xi^a; "9u+2" selects the other primitive choice."""
    if candidate == "3u+2":
        return 3 * u + 2
    if candidate == "9u+2":
        return 9 * u + 2
    raise ValueError(f"unknown Galois candidate {candidate!r}")


def galois_apply(x: CycNum, u: int, candidate: str = "3u+2") -> CycNum:
    """Apply xi -> xi^{3u+2} (or the chosen candidate).

    Numbers stored at an order M that is a multiple of 12u are mapped with
    some a' = a mod 12u that is a unit mod M.  Any such a' agrees on Q(xi).
    """
    base = _order(u)
    if x.order % base:
        raise ValueError(f"order {x.order} is not a multiple of {base}")
    a = galois_exponent(u, candidate)
    while math.gcd(a, x.order) != 1:
        a += base
    return x.galois(a)


@dataclass(frozen=True)
class GaloisPermutation:
    pi: dict
    eps: dict


def galois_permutation(u: int) -> GaloisPermutation:
    """The permutation and signs with sigma(S_{l,l'}) = eps(l') S_{l,pi(l')}."""
    pi, eps = {}, {}
    for lam in enumerate_P(u):
        red = alcove_reduce(lam.finite() * 2 + RHO, u)
        if red is ON_WALL:
            raise ArithmeticError(f"2*{lam.text()}+rho lies on an affine wall")
        image, det = red
        pi[lam] = image
        eps[lam] = -det
    if sorted(map(AffineWeight.key, pi.values())) != sorted(map(AffineWeight.key, pi)):
        raise ArithmeticError("Galois map on labels is not a permutation")
    return GaloisPermutation(pi, eps)


def check_galois_permutation(u: int, perm: GaloisPermutation | None = None) -> bool:
    perm = perm or galois_permutation(u)
    s = wzw_smatrix(u)
    for i, a in enumerate(s.rows):
        for j, b in enumerate(s.cols):
            lhs = galois_apply(s.entries[i][j], u)
            rhs = s.entry(a, perm.pi[b]).scale(perm.eps[b])
            if lhs != rhs:
                return False
    return True


def check_galois_relation(u: int) -> bool:
    """S^BP = exp(2 pi i (j + j' - u/3)) sigma(S^{(u,1)}) entrywise."""
    n = _order(u)
    s, b = wzw_smatrix(u), bp_smatrix(u)
    for i, a in enumerate(s.rows):
        for j, c in enumerate(s.cols):
            phase = bp_charge(a) + bp_charge(c) - Fraction(u, 3)
            rhs = CycNum.root_of_unity(n, int(phase * n)) * galois_apply(s.entries[i][j], u)
            if b.entries[i][j] != rhs:
                return False
    return True


def bp_s_squared_permutation(u: int) -> dict | None:
    """If S^2 is a permutation matrix, the permutation; otherwise None."""
    s = bp_smatrix(u)
    sq = s @ s
    out = {}
    for i, a in enumerate(sq.rows):
        hits = [j for j, x in enumerate(sq.entries[i]) if not x.is_zero()]
        if len(hits) != 1 or sq.entries[i][hits[0]] != 1:
            return None
        out[a] = sq.cols[hits[0]]
    return out


# ---------------------------------------------------------------------------
# relaxed, semirelaxed and highest-weight kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumericGamma:
    """A real gamma given by float root coordinates, for generic-point checks."""

    c1: float
    c2: float

    def pair(self, g: Coweight) -> float:
        return self.c1 * g.g1 + self.c2 * g.g2

    def weyl(self, w: WeylElement) -> "NumericGamma":
        # act linearly on root coordinates through the images of alpha1, alpha2
        a1 = w.act(FiniteWeight(2, -1)).root_coords()
        a2 = w.act(FiniteWeight(-1, 2)).root_coords()
        return NumericGamma(self.c1 * float(a1[0]) + self.c2 * float(a2[0]),
                            self.c1 * float(a1[1]) + self.c2 * float(a2[1]))

    def shift(self, x: FiniteWeight) -> "NumericGamma":
        c1, c2 = x.root_coords()
        return NumericGamma(self.c1 + float(c1), self.c2 + float(c2))


Gamma = Union[GammaCoset, NumericGamma]


def _pair(gamma: Gamma, g: Coweight):
    if isinstance(gamma, GammaCoset):
        return g.pair(gamma.rep)
    return gamma.pair(g)


def _gamma_weyl(gamma: Gamma, w: WeylElement) -> Gamma:
    return gamma.weyl(w)


def _gamma_shift(gamma: Gamma, x: FiniteWeight) -> Gamma:
    if isinstance(gamma, GammaCoset):
        return gamma + x
    return gamma.shift(x)


@dataclass(frozen=True)
class RelaxedLabel:
    """(g, lambda, [gamma]) labelling the spectral flow sigma^g(R^lambda_gamma)."""

    g: Coweight
    lam: AffineWeight
    gamma: Gamma

    @property
    def exact(self) -> bool:
        return isinstance(self.gamma, GammaCoset)


class PoleError(ArithmeticError):
    """A kernel denominator vanishes at the requested column."""


@dataclass(frozen=True)
class DenominatorFactor:
    """1 + exp(2 pi i (<h, gamma'> + m j_{lambda'} + c))."""

    h: Coweight
    m: int
    c: Fraction

    def argument(self, col: RelaxedLabel):
        return _pair(col.gamma, self.h) + self.m * bp_charge(col.lam) + self.c


def _exp2pi(x) -> Number:
    if isinstance(x, Fraction):
        return Phase(x).to_cyc()
    return cmath.exp(2j * math.pi * x)


@dataclass(frozen=True)
class KernelTerm:
    coefficient: int
    numerator: Number
    denominators: tuple[DenominatorFactor, ...]
    arguments: tuple

    def factor_values(self) -> list[Number]:
        return [1 + _exp2pi(a) for a in self.arguments]


@dataclass(frozen=True)
class SKernelValue:
    """Sum of terms coefficient * numerator / prod(denominators)."""

    terms: tuple[KernelTerm, ...]

    @property
    def is_exact(self) -> bool:
        return all(isinstance(t.numerator, CycNum) and all(isinstance(a, Fraction) for a in t.arguments)
                   for t in self.terms)

    def poles(self) -> list[DenominatorFactor]:
        out = []
        for t in self.terms:
            for d, a in zip(t.denominators, t.arguments):
                if isinstance(a, Fraction):
                    if (a - Fraction(1, 2)).denominator == 1:
                        out.append(d)
                elif abs(1 + cmath.exp(2j * math.pi * a)) < 1e-12:
                    out.append(d)
        return out

    def is_pole(self) -> bool:
        return bool(self.poles())

    @property
    def exact(self) -> CycNum:
        if not self.is_exact:
            raise ValueError("kernel has numeric data")
        if self.is_pole():
            raise PoleError("kernel denominator vanishes")
        total = None
        for t in self.terms:
            val = t.numerator.scale(t.coefficient)
            # each 1 + e(a) lives in a small field; invert there before lifting
            for f in t.factor_values():
                val = _mul(val, f.inverse())
            total = val if total is None else _add(total, val)
        return total

    @property
    def numeric(self) -> complex:
        if self.is_pole():
            raise PoleError("kernel denominator vanishes")
        total = 0j
        for t in self.terms:
            num = t.numerator.to_complex() if isinstance(t.numerator, CycNum) else t.numerator
            den = 1 + 0j
            for f in t.factor_values():
                den *= f.to_complex() if isinstance(f, CycNum) else f
            total += t.coefficient * num / den
        return total

    def cleared(self) -> Number:
        """Value multiplied by all denominators of a single-term kernel."""
        if len(self.terms) != 1:
            raise ValueError("clearing denominators needs a single term")
        t = self.terms[0]
        return t.numerator.scale(t.coefficient) if isinstance(t.numerator, CycNum) else t.coefficient * t.numerator


def _mul(a: CycNum, b: CycNum) -> CycNum:
    a, b = lift_common(a, b)
    return a * b


def _add(a: CycNum, b: CycNum) -> CycNum:
    a, b = lift_common(a, b)
    return a + b


def _relaxed_phase(u: int, row: RelaxedLabel, col: RelaxedLabel):
    return -(row.g.pair_coweight(col.g) * Fraction(u, 2) + _pair(row.gamma, col.g) + _pair(col.gamma, row.g))


def _relaxed_value(u: int, row: RelaxedLabel, col: RelaxedLabel) -> Number:
    phase = _relaxed_phase(u, row, col)
    if isinstance(phase, Fraction):
        return _mul(Phase(phase).to_cyc(), bp_entry(u, row.lam, col.lam))
    sbp = _bp_complex(u)[_bp_index(u, row.lam)][_bp_index(u, col.lam)]
    return cmath.exp(2j * math.pi * phase) * sbp


def relaxed_skernel(u: int, row: RelaxedLabel, col: RelaxedLabel) -> SKernelValue:
    """exp(-2 pi i (<g,g'> u/2 + <gamma,g'> + <g,gamma'>)) S^BP_{lambda,lambda'}."""
    return SKernelValue((KernelTerm(1, _relaxed_value(u, row, col), (), ()),))


def relaxed_skernel_factorised(u: int, row: RelaxedLabel, col: RelaxedLabel) -> complex:
    """The same kernel assembled from BP, ghost and lattice S-matrices.

    gamma = (j + mu + u/6) alpha2 + (nu - u/6) alpha3 gives
    nu = <gamma, w1^> + u/6 and mu = <gamma, w2^> - j - nu.
    """
    k = float(level(u))

    def free_data(lab: RelaxedLabel):
        j = float(bp_charge(lab.lam))
        nu = float(_pair(lab.gamma, CW1)) + u / 6
        mu = float(_pair(lab.gamma, CW2)) - j - nu
        ell = lab.g.g2                    # <alpha2, g>
        m = lab.g.g1 + lab.g.g2           # <alpha3, g>
        return ell, mu, m, nu + lab.g.g1 * u / 6

    ell, mu, m, nu = free_data(row)
    ellp, mup, mp, nup = free_data(col)
    s_bp = _bp_complex(u)[_bp_index(u, row.lam.nabla(ell))][_bp_index(u, col.lam.nabla(ellp))]
    s_ghost = (-1) ** (ell + ellp) * cmath.exp(-2j * math.pi * (ell * mup + ellp * mu))
    s_lattice = cmath.exp(2j * math.pi * (m + mp) * k / 3) * cmath.exp(-2j * math.pi * (m * nup + mp * nu))
    return s_bp * s_ghost * s_lattice


def _check_semirelaxed_row(u: int, lam: AffineWeight, gamma: Gamma) -> None:
    if isinstance(gamma, GammaCoset):
        ok = semirelaxed_condition(u, lam, gamma)
    else:
        val = gamma.pair(CW3) + float(bp_charge(lam)) + u / 6
        ok = abs(val - round(val)) < 1e-9
    if not ok:
        raise ValueError("row gamma violates <gamma, w3^> = -j - u/6 mod Z")


def semirelaxed_skernel(u: int, w: WeylElement, row: RelaxedLabel, col: RelaxedLabel) -> SKernelValue:
    """Kernel of sigma^g w(S^lambda_gamma) against sigma^g'(R^lambda'_gamma')."""
    _check_semirelaxed_row(u, row.lam, row.gamma)
    twisted = RelaxedLabel(row.g, row.lam, _gamma_weyl(row.gamma, w))
    num = _relaxed_value(u, twisted, col)
    den = DenominatorFactor(-w.act_coweight(CW3), -1, Fraction(u, 3))
    return SKernelValue((KernelTerm(1, num, (den,), (den.argument(col),)),))


HW_VARIANTS = ("Lambda2", "Lambda1", "omega0", "omega1", "omega2", "vacuum")


def _hw_factors(u: int) -> tuple[DenominatorFactor, ...]:
    third = Fraction(u, 3)
    return (DenominatorFactor(CW1, -1, third),
            DenominatorFactor(CW2, 1, -third),
            DenominatorFactor(-CW3, -1, third))


def _lambda2_term(u: int, g: Coweight, lam: AffineWeight, col: RelaxedLabel, coefficient: int = 1) -> KernelTerm:
    row = RelaxedLabel(g, lam, GammaCoset(gamma1_rep(u, lam)))
    dens = _hw_factors(u)
    return KernelTerm(coefficient, _relaxed_value(u, row, col), dens, tuple(d.argument(col) for d in dens))


def hw_skernel(u: int, variant: str, g: Coweight, lam: AffineWeight, col: RelaxedLabel) -> SKernelValue:
    """Kernel of sigma^g applied to an irreducible highest-weight module.

    Lambda2: L(nabla(lam) - (u/2) w2);  Lambda1: L(s1.(lam - (u/2) w1));
    omegaI: L(lam - (u/2) wI);  vacuum: L(k w0), with lam ignored.
    """
    if variant == "Lambda2":
        return SKernelValue((_lambda2_term(u, g, lam, col),))
    if variant == "omega0":
        return SKernelValue((_lambda2_term(u, g - CW2, lam, col),))
    if variant == "vacuum":
        return SKernelValue((_lambda2_term(u, g - CW2, vacuum(u), col),))
    if variant == "omega1":
        return SKernelValue((_lambda2_term(u, g + CW3, lam.nabla(1), col),))
    if variant == "omega2":
        return SKernelValue((_lambda2_term(u, g, lam.nabla(-1), col),))
    if variant == "Lambda1":
        # [L(Lambda1)] = [s1(S^lam_{gamma2})] - [sigma^{w3^} L(lam - (u/2) w0)]
        semi = semirelaxed_skernel(u, S1, RelaxedLabel(g, lam, GammaCoset(gamma2_rep(u, lam))), col)
        return SKernelValue(semi.terms + (_lambda2_term(u, g + CW3 - CW2, lam, col, -1),))
    raise ValueError(f"unknown highest-weight variant {variant!r}")


def vacuum_skernel_cosine(u: int, col: RelaxedLabel) -> complex:
    """Closed cosine form of the vacuum kernel (complex evaluation)."""
    j = float(bp_charge(col.lam))
    third = u / 3
    a = 2 * math.pi * (float(_pair(col.gamma, CW1)) - j + third)
    b = 2 * math.pi * (float(_pair(col.gamma, CW2)) + j - third)
    c = 2 * math.pi * (float(_pair(col.gamma, CW3)) + j - third)
    sbp = _bp_complex(u)[_bp_index(u, vacuum(u))][_bp_index(u, col.lam)]
    num = cmath.exp(-2j * math.pi * (j - third)) * sbp
    return num / (2 * (1 + math.cos(a) + math.cos(b) + math.cos(c)))
