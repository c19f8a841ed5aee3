"""Weight combinatorics for sl(3) and its affinisation.

Finite weights live in fundamental-weight coordinates; the bilinear form is
the inverse Cartan matrix.  Because sl(3) is simply laced, coroots are
identified with roots and a coweight g = g1*w1^ + g2*w2^ is identified with
the weight g1*w1 + g2*w2, so <lambda, alpha_i^> is just the Dynkin label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Union

Rational = Union[int, Fraction]

__all__ = [
    "FiniteWeight",
    "Coweight",
    "AffineWeight",
    "GammaCoset",
    "BPWeight",
    "WeylElement",
    "AdmissibleWeight",
    "DegenerationData",
    "OnWall",
    "ON_WALL",
    "OMEGA1", "OMEGA2", "OMEGA3", "ALPHA1", "ALPHA2", "ALPHA3", "RHO", "ZERO",
    "CW1", "CW2", "CW3", "CW0", "COROOT1", "COROOT2", "COROOT3",
    "WEYL_GROUP", "S1", "S2", "S3", "IDENTITY",
    "level", "c_sl", "c_bp",
    "bilinear", "weyl_act", "nabla", "dynkin", "enumerate_P",
    "admissible_weights", "identify_admissible", "admissible_from_family",
    "bp_weight", "spectral_flow_weight", "sf_hw_table", "degeneration_params",
    "gamma_of", "alcove_reduce", "affine_reflect", "fundamental_weight",
]


def _q(x: Rational) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


# ---------------------------------------------------------------------------
# finite weights and coweights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteWeight:
    """a1*w1 + a2*w2 in fundamental-weight coordinates."""

    a1: Fraction
    a2: Fraction

    def __post_init__(self):
        object.__setattr__(self, "a1", _q(self.a1))
        object.__setattr__(self, "a2", _q(self.a2))

    @classmethod
    def from_root_coords(cls, c1: Rational, c2: Rational) -> "FiniteWeight":
        """c1*alpha1 + c2*alpha2."""
        c1, c2 = _q(c1), _q(c2)
        return cls(2 * c1 - c2, -c1 + 2 * c2)

    def root_coords(self) -> tuple[Fraction, Fraction]:
        return ((2 * self.a1 + self.a2) / 3, (self.a1 + 2 * self.a2) / 3)

    def __add__(self, other: "FiniteWeight") -> "FiniteWeight":
        if not isinstance(other, FiniteWeight):
            return NotImplemented
        return FiniteWeight(self.a1 + other.a1, self.a2 + other.a2)

    def __sub__(self, other: "FiniteWeight") -> "FiniteWeight":
        if not isinstance(other, FiniteWeight):
            return NotImplemented
        return FiniteWeight(self.a1 - other.a1, self.a2 - other.a2)

    def __neg__(self) -> "FiniteWeight":
        return FiniteWeight(-self.a1, -self.a2)

    def __mul__(self, r: Rational) -> "FiniteWeight":
        r = _q(r)
        return FiniteWeight(self.a1 * r, self.a2 * r)

    __rmul__ = __mul__

    def __truediv__(self, r: Rational) -> "FiniteWeight":
        return self * (1 / _q(r))

    def is_integral(self) -> bool:
        return self.a1.denominator == 1 and self.a2.denominator == 1

    def in_root_lattice(self) -> bool:
        c1, c2 = self.root_coords()
        return c1.denominator == 1 and c2.denominator == 1

    def norm2(self) -> Fraction:
        return bilinear(self, self)

    def as_tuple(self) -> tuple[Fraction, Fraction]:
        return (self.a1, self.a2)

    def __repr__(self) -> str:
        return f"({self.a1},{self.a2})"


def bilinear(x: FiniteWeight, y: FiniteWeight) -> Fraction:
    """<x, y> with <w_i, w_j> given by the inverse Cartan matrix."""
    return (2 * x.a1 * y.a1 + x.a1 * y.a2 + x.a2 * y.a1 + 2 * x.a2 * y.a2) / 3


ZERO = FiniteWeight(0, 0)
OMEGA1 = FiniteWeight(1, 0)
OMEGA2 = FiniteWeight(0, 1)
OMEGA3 = OMEGA1 - OMEGA2
ALPHA1 = FiniteWeight(2, -1)
ALPHA2 = FiniteWeight(-1, 2)
ALPHA3 = ALPHA1 + ALPHA2
RHO = FiniteWeight(1, 1)
POSITIVE_ROOTS = (ALPHA1, ALPHA2, ALPHA3)


@dataclass(frozen=True)
class Coweight:
    """g1*w1^ + g2*w2^ with integer coefficients."""

    g1: int
    g2: int

    def __post_init__(self):
        for v in (self.g1, self.g2):
            if _q(v).denominator != 1:
                raise ValueError("coweight coefficients must be integers")
        object.__setattr__(self, "g1", int(self.g1))
        object.__setattr__(self, "g2", int(self.g2))

    def weight(self) -> FiniteWeight:
        """The weight <g, .> obtained through the bilinear form."""
        return FiniteWeight(self.g1, self.g2)

    @classmethod
    def from_weight(cls, w: FiniteWeight) -> "Coweight":
        if not w.is_integral():
            raise ValueError(f"{w} is not a coweight")
        return cls(int(w.a1), int(w.a2))

    def pair(self, x: FiniteWeight) -> Fraction:
        return bilinear(self.weight(), x)

    def pair_coweight(self, other: "Coweight") -> Fraction:
        return bilinear(self.weight(), other.weight())

    def norm2(self) -> Fraction:
        return self.weight().norm2()

    def coroot_coords(self) -> tuple[Fraction, Fraction]:
        return self.weight().root_coords()

    def __add__(self, other: "Coweight") -> "Coweight":
        if not isinstance(other, Coweight):
            return NotImplemented
        return Coweight(self.g1 + other.g1, self.g2 + other.g2)

    def __sub__(self, other: "Coweight") -> "Coweight":
        if not isinstance(other, Coweight):
            return NotImplemented
        return Coweight(self.g1 - other.g1, self.g2 - other.g2)

    def __neg__(self) -> "Coweight":
        return Coweight(-self.g1, -self.g2)

    def __mul__(self, n: int) -> "Coweight":
        return Coweight(self.g1 * n, self.g2 * n)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.g1 == 0 and self.g2 == 0

    def __repr__(self) -> str:
        return f"g({self.g1},{self.g2})"


CW0 = Coweight(0, 0)
CW1 = Coweight(1, 0)
CW2 = Coweight(0, 1)
CW3 = CW1 - CW2
COROOT1 = Coweight(2, -1)
COROOT2 = Coweight(-1, 2)
COROOT3 = COROOT1 + COROOT2


def fundamental_coweight(i: int) -> Coweight:
    return {1: CW1, 2: CW2, 3: CW3}[i]


def fundamental_weight(i: int) -> FiniteWeight:
    """Finite parts of w_0, w_1, w_2 and the combination w_3 = w_1 - w_2."""
    return {0: ZERO, 1: OMEGA1, 2: OMEGA2, 3: OMEGA3}[i]


# ---------------------------------------------------------------------------
# the Weyl group S3
# ---------------------------------------------------------------------------

def _reflect(x: FiniteWeight, i: int) -> FiniteWeight:
    if i == 1:
        return FiniteWeight(-x.a1, x.a2 + x.a1)
    if i == 2:
        return FiniteWeight(x.a1 + x.a2, -x.a2)
    raise ValueError("simple reflections are s1 and s2")


_CANONICAL_WORDS = ((), (1,), (2,), (1, 2), (2, 1), (1, 2, 1))


def _word_matrix(word: tuple[int, ...]) -> tuple[int, int, int, int]:
    # image of w1 and w2 under the composite s_{i1} s_{i2} ... (rightmost acts first)
    e1, e2 = OMEGA1, OMEGA2
    for i in reversed(word):
        e1, e2 = _reflect(e1, i), _reflect(e2, i)
    return (int(e1.a1), int(e2.a1), int(e1.a2), int(e2.a2))


_MATRIX_TO_WORD = {_word_matrix(w): w for w in _CANONICAL_WORDS}


@dataclass(frozen=True)
class WeylElement:
    """An element of S3, stored as its canonical reduced word in s1, s2."""

    word: tuple[int, ...]

    def __post_init__(self):
        word = tuple(int(i) for i in self.word)
        mat = _word_matrix(word)
        object.__setattr__(self, "word", _MATRIX_TO_WORD[mat])

    @classmethod
    def from_word(cls, word) -> "WeylElement":
        if isinstance(word, str):
            word = _parse_word(word)
        return cls(tuple(word))

    @property
    def det(self) -> int:
        return -1 if len(self.word) % 2 else 1

    @property
    def length(self) -> int:
        return len(self.word)

    def act(self, x: FiniteWeight) -> FiniteWeight:
        for i in reversed(self.word):
            x = _reflect(x, i)
        return x

    def act_shifted(self, x: FiniteWeight) -> FiniteWeight:
        return self.act(x + RHO) - RHO

    def act_coweight(self, g: Coweight) -> Coweight:
        return Coweight.from_weight(self.act(g.weight()))

    def __mul__(self, other: "WeylElement") -> "WeylElement":
        return WeylElement(self.word + other.word)

    def inverse(self) -> "WeylElement":
        return WeylElement(tuple(reversed(self.word)))

    def name(self) -> str:
        return "e" if not self.word else "".join(f"s{i}" for i in self.word)

    def __repr__(self) -> str:
        return self.name()


def _parse_word(text: str) -> tuple[int, ...]:
    text = text.strip().replace("w", "s").replace("*", "")
    if text in ("", "e", "id", "1"):
        return ()
    out: list[int] = []
    for part in text.split("s")[1:]:
        if part not in ("1", "2", "3"):
            raise ValueError(f"bad Weyl word {text!r}")
        out.extend((1, 2, 1) if part == "3" else (int(part),))
    return tuple(out)


IDENTITY = WeylElement(())
S1 = WeylElement((1,))
S2 = WeylElement((2,))
S3 = WeylElement((1, 2, 1))
WEYL_GROUP = tuple(WeylElement(w) for w in _CANONICAL_WORDS)


def weyl_act(w: WeylElement, lam: FiniteWeight, shifted: bool = False) -> FiniteWeight:
    return w.act_shifted(lam) if shifted else w.act(lam)


def affine_reflect(x: FiniteWeight, root: FiniteWeight, n: int, kappa: Fraction) -> tuple[FiniteWeight, Fraction]:
    """Reflect an affine weight of level kappa in the real root root + n*delta.

    x is the finite part.  Returns the new finite part and the increase of
    the q-grade (the decrease of the delta coefficient).
    """
    m = bilinear(x, root) + n * kappa
    return x - root * m, m * n


# ---------------------------------------------------------------------------
# affine weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineWeight:
    """Dynkin labels (l0, l1, l2) plus an optional grade (delta coefficient drop)."""

    l0: Fraction
    l1: Fraction
    l2: Fraction
    grade: Fraction = field(default=Fraction(0))

    def __post_init__(self):
        for name in ("l0", "l1", "l2", "grade"):
            object.__setattr__(self, name, _q(getattr(self, name)))

    @classmethod
    def from_finite(cls, fw: FiniteWeight, lvl: Rational, grade: Rational = 0) -> "AffineWeight":
        return cls(_q(lvl) - fw.a1 - fw.a2, fw.a1, fw.a2, grade)

    @classmethod
    def parse(cls, text: str) -> "AffineWeight":
        parts = [p for p in text.replace("(", "").replace(")", "").split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three Dynkin labels, got {text!r}")
        return cls(*(Fraction(p.strip()) for p in parts))

    @property
    def labels(self) -> tuple[Fraction, Fraction, Fraction]:
        return (self.l0, self.l1, self.l2)

    @property
    def level(self) -> Fraction:
        return self.l0 + self.l1 + self.l2

    def finite(self) -> FiniteWeight:
        return FiniteWeight(self.l1, self.l2)

    def nabla(self, n: int = 1) -> "AffineWeight":
        labs = self.labels
        n %= 3
        rot = labs[n:] + labs[:n]
        return AffineWeight(*rot, grade=self.grade)

    def dynkin(self) -> "AffineWeight":
        return AffineWeight(self.l0, self.l2, self.l1, grade=self.grade)

    def shifted_weyl(self, w: WeylElement) -> "AffineWeight":
        return AffineWeight.from_finite(w.act_shifted(self.finite()), self.level, self.grade)

    def __add__(self, other: "AffineWeight") -> "AffineWeight":
        return AffineWeight(self.l0 + other.l0, self.l1 + other.l1, self.l2 + other.l2, self.grade + other.grade)

    def __sub__(self, other: "AffineWeight") -> "AffineWeight":
        return AffineWeight(self.l0 - other.l0, self.l1 - other.l1, self.l2 - other.l2, self.grade - other.grade)

    def is_dominant_integral(self) -> bool:
        return all(x.denominator == 1 and x >= 0 for x in self.labels)

    def key(self) -> tuple[Fraction, Fraction, Fraction]:
        return self.labels

    def text(self) -> str:
        return ",".join(str(x) for x in self.labels)

    def __repr__(self) -> str:
        base = f"[{self.text()}]"
        return base if self.grade == 0 else f"{base}@{self.grade}"


def nabla(lam: AffineWeight, n: int = 1) -> AffineWeight:
    """(l0, l1, l2) -> (l1, l2, l0), iterated n times."""
    return lam.nabla(n)


def dynkin(lam: AffineWeight) -> AffineWeight:
    """(l0, l1, l2) -> (l0, l2, l1)."""
    return lam.dynkin()


def level(u: int) -> Fraction:
    """k = -3 + u/2."""
    return Fraction(u, 2) - 3


def c_sl(u: int) -> Fraction:
    k = level(u)
    return 8 * k / (k + 3)


def c_bp(u: int) -> Fraction:
    k = level(u)
    return -4 * (k + 1) * (2 * k + 3) / (k + 3)


def _check_u(u: int) -> None:
    if not isinstance(u, int) or u < 3 or u % 2 == 0:
        raise ValueError(f"u must be an odd integer >= 3, got {u!r}")


@lru_cache(maxsize=None)
def _enumerate_P(n: int) -> tuple[AffineWeight, ...]:
    out = []
    for l1 in range(n + 1):
        for l2 in range(n + 1 - l1):
            out.append(AffineWeight(n - l1 - l2, l1, l2))
    return tuple(out)


def enumerate_P(u: int) -> list[AffineWeight]:
    """Dominant integral weights of level u - 3, ordered lexicographically in (l1, l2)."""
    if u < 3:
        raise ValueError("u must be at least 3")
    return list(_enumerate_P(u - 3))


def vacuum(u: int) -> AffineWeight:
    return AffineWeight(u - 3, 0, 0)


def _check_P(u: int, lam: AffineWeight) -> None:
    if not lam.is_dominant_integral() or lam.level != u - 3:
        raise ValueError(f"{lam} is not dominant integral of level {u - 3}")


# ---------------------------------------------------------------------------
# admissible weights for denominator 2
# ---------------------------------------------------------------------------

FAMILIES = ("0", "1", "2", "w1")


@dataclass(frozen=True)
class AdmissibleWeight:
    """An admissible weight of level -3 + u/2 with its family decomposition.

    family "0", "1", "2": lam - (u/2) w_i;  family "w1": s1 . (lam - (u/2) w_1).
    """

    u: int
    family: str
    lam: AffineWeight

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    @property
    def weight(self) -> AffineWeight:
        return _admissible_weight(self.u, self.family, self.lam)

    @property
    def y(self) -> WeylElement:
        return S1 if self.family == "w1" else IDENTITY

    @property
    def fractional_index(self) -> int:
        """i such that mu^{F,y} = w_i."""
        return {"0": 0, "1": 1, "2": 2, "w1": 1}[self.family]

    @property
    def mu_F(self) -> FiniteWeight:
        """Finite part of y(mu^{F,y})."""
        return self.y.act(fundamental_weight(self.fractional_index))

    @property
    def mu_I(self) -> AffineWeight:
        return self.lam

    def tag(self) -> str:
        return f"{self.family}:{self.lam.text()}"

    def __repr__(self) -> str:
        return f"Adm({self.family}, {self.lam.text()})"


def _admissible_weight(u: int, family: str, lam: AffineWeight) -> AffineWeight:
    half = Fraction(u, 2)
    if family == "w1":
        base = AffineWeight(lam.l0, lam.l1 - half, lam.l2)
        return base.shifted_weyl(S1)
    i = int(family)
    labs = list(lam.labels)
    labs[i] -= half
    return AffineWeight(*labs)


def admissible_from_family(u: int, family: str, lam: AffineWeight) -> AdmissibleWeight:
    _check_P(u, lam)
    return AdmissibleWeight(u, family, lam)


@lru_cache(maxsize=None)
def _admissible_table(u: int) -> tuple[AdmissibleWeight, ...]:
    _check_u(u)
    out = []
    for fam in FAMILIES:
        for lam in enumerate_P(u):
            out.append(AdmissibleWeight(u, fam, lam))
    return tuple(out)


def admissible_weights(u: int) -> list[AdmissibleWeight]:
    """All admissible weights: families 0, 1, 2 then w1, each over P^{u-3}."""
    return list(_admissible_table(u))


@lru_cache(maxsize=None)
def _admissible_index(u: int) -> dict:
    return {a.weight.labels: a for a in _admissible_table(u)}


def identify_admissible(u: int, weight: AffineWeight) -> AdmissibleWeight | None:
    """Find the family decomposition of an affine weight, or None."""
    return _admissible_index(u).get(weight.labels)


# ---------------------------------------------------------------------------
# Bershadsky-Polyakov data and spectral flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BPWeight:
    j: Fraction
    Delta: Fraction


def bp_weight(u: int, lam: AffineWeight) -> BPWeight:
    """J0-charge and conformal weight of the BP highest-weight module labelled by lam."""
    _check_P(u, lam)
    l1, l2 = lam.l1, lam.l2
    j = -(l1 - l2) / 3
    delta = ((l1 - l2) * (l1 - l2 - u) + 3 * (l1 + l2) * (l1 + l2 - u + 4)) / (6 * u)
    return BPWeight(j, delta)


def bp_charge(lam: AffineWeight) -> Fraction:
    return -(lam.l1 - lam.l2) / 3


def spectral_flow_weight(g: Coweight, mu: FiniteWeight, delta: Rational, k: Rational) -> tuple[FiniteWeight, Fraction]:
    """Weight and conformal weight after spectral flow by g at level k."""
    k = _q(k)
    return mu + g.weight() * k, _q(delta) + g.pair(mu) + g.norm2() * k / 2


def sf_hw_table(u: int, nu: AdmissibleWeight) -> tuple[int, AdmissibleWeight]:
    """(sign, xi) with ch sigma^{w1^}(L_nu) = sign * ch L_xi for meromorphic extensions."""
    if not isinstance(nu, AdmissibleWeight) or nu.u != u:
        raise ValueError("expected an admissible weight for this u")
    lam = nu.lam
    if nu.family == "0":
        return 1, AdmissibleWeight(u, "1", lam.nabla(-1))
    if nu.family == "2":
        return -1, AdmissibleWeight(u, "w1", lam)
    if nu.family == "1":
        return 1, AdmissibleWeight(u, "0", lam)
    return -1, AdmissibleWeight(u, "2", lam.nabla(-1))


# ---------------------------------------------------------------------------
# gamma cosets and degeneration data
# ---------------------------------------------------------------------------

def _frac_part(x: Fraction) -> Fraction:
    return x - math.floor(x)


@dataclass(frozen=True)
class GammaCoset:
    """A class in h*/Q, stored through its canonical representative.

    The canonical representative has root coordinates in [0, 1).
    """

    rep: FiniteWeight

    def __post_init__(self):
        c1, c2 = self.rep.root_coords()
        object.__setattr__(self, "rep", FiniteWeight.from_root_coords(_frac_part(c1), _frac_part(c2)))

    @classmethod
    def from_root_coords(cls, c1: Rational, c2: Rational) -> "GammaCoset":
        return cls(FiniteWeight.from_root_coords(c1, c2))

    @classmethod
    def parse(cls, text: str) -> "GammaCoset":
        a, b = text.split(",")
        return cls.from_root_coords(Fraction(a.strip()), Fraction(b.strip()))

    def root_coords(self) -> tuple[Fraction, Fraction]:
        return self.rep.root_coords()

    def __add__(self, other) -> "GammaCoset":
        if isinstance(other, GammaCoset):
            return GammaCoset(self.rep + other.rep)
        if isinstance(other, FiniteWeight):
            return GammaCoset(self.rep + other)
        return NotImplemented

    def __sub__(self, other) -> "GammaCoset":
        if isinstance(other, GammaCoset):
            return GammaCoset(self.rep - other.rep)
        if isinstance(other, FiniteWeight):
            return GammaCoset(self.rep - other)
        return NotImplemented

    def __neg__(self) -> "GammaCoset":
        return GammaCoset(-self.rep)

    def weyl(self, w: WeylElement) -> "GammaCoset":
        return GammaCoset(w.act(self.rep))

    def scale(self, n: int) -> "GammaCoset":
        """n * [gamma]; well defined for integer n."""
        if _q(n).denominator != 1:
            raise ValueError("only integer multiples are defined on h*/Q")
        return GammaCoset(self.rep * n)

    def is_zero(self) -> bool:
        return self.rep == ZERO

    def pair_mod1(self, g: Coweight) -> Fraction:
        """<gamma, g> modulo 1 (well defined since <Q, P^> lies in Z)."""
        return _frac_part(g.pair(self.rep))

    def text(self) -> str:
        c1, c2 = self.root_coords()
        return f"{c1},{c2}"

    def __repr__(self) -> str:
        return f"[{self.text()}]"


@dataclass(frozen=True)
class DegenerationData:
    t1: Fraction
    t2: Fraction
    Lambda1: AdmissibleWeight
    Lambda2: AdmissibleWeight
    gamma1: GammaCoset
    gamma2: GammaCoset


def gamma1_rep(u: int, lam: AffineWeight) -> FiniteWeight:
    """(3 j + u/2) w2, the representative used for gamma^1."""
    return OMEGA2 * (3 * bp_charge(lam) + Fraction(u, 2))


def gamma2_rep(u: int, lam: AffineWeight) -> FiniteWeight:
    """(3 j + u/2) w2 - (u/2) alpha3."""
    return gamma1_rep(u, lam) - ALPHA3 * Fraction(u, 2)


def degeneration_params(u: int, lam: AffineWeight) -> DegenerationData:
    _check_P(u, lam)
    l1, l2 = lam.l1, lam.l2
    t1 = -(l1 + 2 * l2) / 3 - 1 + Fraction(u, 3)
    t2 = (2 * l1 + l2) / 3 + 1 - Fraction(u, 6)
    lam1 = AdmissibleWeight(u, "w1", lam)
    # Lambda^2 = nabla(lam) - (u/2) w2, which is the family-2 weight of nabla(lam)
    lam2 = AdmissibleWeight(u, "2", lam.nabla(1))
    return DegenerationData(t1, t2, lam1, lam2,
                            GammaCoset(gamma1_rep(u, lam)), GammaCoset(gamma2_rep(u, lam)))


def gamma_rep(u: int, lam: AffineWeight, mu: Rational, nu: Rational) -> FiniteWeight:
    """(j + mu + u/6) alpha2 + (nu - u/6) alpha3, before reduction mod Q."""
    j = bp_charge(lam)
    sixth = Fraction(u, 6)
    return ALPHA2 * (j + _q(mu) + sixth) + ALPHA3 * (_q(nu) - sixth)


def gamma_of(u: int, lam: AffineWeight, mu: Rational, nu: Rational) -> GammaCoset:
    return GammaCoset(gamma_rep(u, lam, mu, nu))


def semirelaxed_condition(u: int, lam: AffineWeight, gamma: GammaCoset | FiniteWeight) -> bool:
    """<gamma, w3^> = -j - u/6 mod Z."""
    rep = gamma.rep if isinstance(gamma, GammaCoset) else gamma
    val = CW3.pair(rep) + bp_charge(lam) + Fraction(u, 6)
    return val.denominator == 1


# ---------------------------------------------------------------------------
# alcove reduction
# ---------------------------------------------------------------------------

class OnWall:
    """Marker returned when a weight is fixed by an affine reflection."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ON_WALL"


ON_WALL = OnWall()


def alcove_reduce(lam: FiniteWeight, u: int):
    """Move lam into the level-(u-3) alcove by the shifted affine Weyl action.

    Returns (AffineWeight, det) or ON_WALL.
    """
    x = lam + RHO
    for root in POSITIVE_ROOTS:
        if (bilinear(x, root) / u).denominator == 1:
            return ON_WALL
    det = 1
    while True:
        if x.a1 < 0:
            x = _reflect(x, 1)
        elif x.a2 < 0:
            x = _reflect(x, 2)
        elif x.a1 + x.a2 > u:
            x = x - ALPHA3 * (x.a1 + x.a2 - u)
        else:
            break
        det = -det
    fin = x - RHO
    return AffineWeight.from_finite(fin, u - 3), det


def iter_P(u: int) -> Iterator[AffineWeight]:
    yield from enumerate_P(u)
