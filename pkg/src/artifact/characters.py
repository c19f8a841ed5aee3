"""Truncated q-series and the characters built from them.

A QSeries is q^offset * sum_n P_n q^n where each P_n is a Laurent polynomial
in auxiliary variables with rational exponents and n runs over integers up to
the truncation order.  Characters of admissible sl(3) modules come from the
integral Weyl orbit of the highest weight; Bershadsky-Polyakov characters come
from the reduction prescription with the vanishing factors cancelled before
specialising.  The numeric S-transform check compares ratios, so no automorphy
factor is needed.
"""

from __future__ import annotations

import cmath
import json
import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence, Union

from .modular import RelaxedLabel, _bp_complex, bp_tmatrix
from .weights import (
    ALPHA1, ALPHA2, ALPHA3, CW1, CW2, OMEGA1, POSITIVE_ROOTS, RHO,
    AdmissibleWeight, AffineWeight, Coweight, FiniteWeight, GammaCoset,
    admissible_from_family, bilinear, bp_charge, bp_weight, c_bp, enumerate_P, level,
)

Rational = Union[int, Fraction]
Exps = tuple

__all__ = [
    "QSeries", "AffineOrbitTerm", "FormalDeltaSeries", "GeneralizedCharacter", "ReducedCharacter",
    "CharacterError", "OrbitError", "TailError",
    "eta_series", "F_product", "integral_weyl_orbit", "weyl_kac_denominator", "sl3_adm_character",
    "qhr_character", "qhr_reduced_form", "qhr_verma_reduced_form",
    "sf_character_transport", "bp_sf_character_transport", "free_field_characters",
    "generalized_relaxed_character", "numeric_s_check", "numeric_t_check",
    "automorphy_diagnostic", "character_gram_matrix", "DEFAULT_ORDER",
]

DEFAULT_ORDER = 25


class CharacterError(ArithmeticError):
    """A character assembly step failed a consistency check."""


class OrbitError(ArithmeticError):
    """The orbit of a weight is not regular, or the seed is not its top."""


class TailError(ArithmeticError):
    """The truncation tail is too large for the requested tolerance."""

    def __init__(self, message: str, required_order: int | None = None):
        super().__init__(message)
        self.required_order = required_order


def _norm(c):
    if isinstance(c, Fraction) and c.denominator == 1:
        return int(c)
    return c


def _fmt(x) -> str:
    return str(x) if isinstance(x, int) or x.denominator != 1 else str(int(x))


# ---------------------------------------------------------------------------
# truncated series
# ---------------------------------------------------------------------------

class QSeries:
    """q^offset * sum_{n <= order} P_n q^n with Laurent polynomial coefficients.

    terms maps the integer step n to {exponent tuple: coefficient}.  Steps may
    be negative.  Two series compare equal when they agree wherever both are
    known, measured in absolute q-exponents.
    """

    __slots__ = ("variables", "offset", "terms", "order")

    def __init__(self, variables: Sequence[str], offset: Rational, terms: Mapping, order: int):
        self.variables = tuple(variables)
        self.offset = Fraction(offset)
        self.order = int(order)
        nv = len(self.variables)
        clean = {}
        for n, poly in terms.items():
            n = int(n)
            if n > self.order:
                continue
            p = {}
            for e, c in poly.items():
                e = tuple(Fraction(x) for x in e)
                if len(e) != nv:
                    raise ValueError(f"exponent {e} does not match variables {self.variables}")
                if any((6 * x).denominator != 1 for x in e):
                    raise ValueError(f"exponent {e} has a denominator outside 2, 3, 6")
                c = _norm(Fraction(c) if isinstance(c, Fraction) else c)
                if c:
                    p[e] = p.get(e, 0) + c
                    if not p[e]:
                        del p[e]
            if p:
                clean[n] = p
        self.terms = clean

    @classmethod
    def _raw(cls, variables, offset, terms, order) -> "QSeries":
        obj = cls.__new__(cls)
        obj.variables = variables
        obj.offset = offset
        obj.order = order
        obj.terms = {n: p for n, p in terms.items() if p and n <= order}
        return obj

    @classmethod
    def zero(cls, variables: Sequence[str] = (), order: int = 0) -> "QSeries":
        return cls(variables, 0, {}, order)

    @classmethod
    def one(cls, variables: Sequence[str] = (), order: int = 0) -> "QSeries":
        return cls(variables, 0, {0: {(0,) * len(tuple(variables)): 1}}, order)

    # -- inspection ----------------------------------------------------------

    def valuation(self) -> int | None:
        return min(self.terms) if self.terms else None

    def is_zero(self) -> bool:
        return not self.terms

    def grade(self, n: int) -> dict:
        return dict(self.terms.get(n, {}))

    def coefficient(self, n: int, exps: Sequence[Rational] | None = None):
        if exps is None:
            exps = (0,) * len(self.variables)
        return self.terms.get(n, {}).get(tuple(Fraction(x) for x in exps), 0)

    def items(self):
        """(step, exponent tuple, coefficient) in a deterministic order."""
        for n in sorted(self.terms):
            for e in sorted(self.terms[n]):
                yield n, e, self.terms[n][e]

    def truncate(self, order: int) -> "QSeries":
        return QSeries._raw(self.variables, self.offset, self.terms, min(order, self.order))

    def filter(self, keep: Callable[[int, Exps], bool]) -> "QSeries":
        terms = {n: {e: c for e, c in p.items() if keep(n, e)} for n, p in self.terms.items()}
        return QSeries._raw(self.variables, self.offset, terms, self.order)

    def map_exponents(self, fn: Callable[[int, Exps], tuple[Fraction, Exps]], variables=None) -> "QSeries":
        """Apply (n, e) -> (absolute q-exponent, new exponents) to every term.

        The offset of the result is the lowest absolute exponent that occurs.
        Every term is kept; the order is the highest step present.
        """
        moved = [(fn(n, e), c) for n, p in self.terms.items() for e, c in p.items()]
        variables = self.variables if variables is None else tuple(variables)
        if not moved:
            return QSeries(variables, self.offset, {}, self.order)
        base = min(x for (x, _), _ in moved)
        terms: dict = defaultdict(dict)
        for (x, e), c in moved:
            step = x - base
            if step.denominator != 1:
                raise CharacterError("flowed exponents do not share a single q-coset")
            row = terms[int(step)]
            row[e] = row.get(e, 0) + c
        return QSeries(variables, base, terms, max(terms))

    # -- arithmetic ----------------------------------------------------------

    def _coerce(self, other) -> "QSeries":
        if isinstance(other, QSeries):
            if other.variables != self.variables:
                raise ValueError(f"variables differ: {self.variables} vs {other.variables}")
            return other
        if isinstance(other, (int, Fraction)):
            return QSeries(self.variables, 0, {0: {(0,) * len(self.variables): other}}, self.order)
        return NotImplemented

    def __add__(self, other) -> "QSeries":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        d = other.offset - self.offset
        if d.denominator != 1:
            raise ValueError("offsets differ by a non-integer")
        d = int(d)
        base = self.offset if d >= 0 else other.offset
        sa, sb = (0, d) if d >= 0 else (-d, 0)
        order = min(self.order + sa, other.order + sb)
        out: dict = {}
        for s, src in ((sa, self), (sb, other)):
            for n, p in src.terms.items():
                row = out.setdefault(n + s, {})
                for e, c in p.items():
                    v = row.get(e, 0) + c
                    if v:
                        row[e] = v
                    else:
                        row.pop(e, None)
        return QSeries._raw(self.variables, base, out, order)

    __radd__ = __add__

    def __neg__(self) -> "QSeries":
        return QSeries._raw(self.variables, self.offset,
                            {n: {e: -c for e, c in p.items()} for n, p in self.terms.items()}, self.order)

    def __sub__(self, other) -> "QSeries":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __mul__(self, other) -> "QSeries":
        if isinstance(other, (int, Fraction)):
            return QSeries._raw(self.variables, self.offset,
                                {n: {e: _norm(c * other) for e, c in p.items()} for n, p in self.terms.items()}
                                if other else {}, self.order)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        va, vb = self.valuation(), other.valuation()
        if va is None and vb is None:
            order = self.order + other.order + 1
        elif va is None:
            order = self.order + vb
        elif vb is None:
            order = other.order + va
        else:
            order = min(self.order + vb, other.order + va)
        out: dict = {}
        for n1, p1 in self.terms.items():
            for n2, p2 in other.terms.items():
                n = n1 + n2
                if n > order:
                    continue
                row = out.setdefault(n, {})
                for e1, c1 in p1.items():
                    for e2, c2 in p2.items():
                        e = tuple(a + b for a, b in zip(e1, e2))
                        row[e] = row.get(e, 0) + c1 * c2
        out = {n: {e: _norm(c) for e, c in p.items() if c} for n, p in out.items()}
        return QSeries._raw(self.variables, self.offset + other.offset, out, order)

    __rmul__ = __mul__

    def inverse(self) -> "QSeries":
        """Invert a series whose lowest step is a single monomial."""
        v = self.valuation()
        if v is None:
            raise ZeroDivisionError("the zero series has no inverse")
        lead = self.terms[v]
        if len(lead) != 1:
            raise ValueError("the lowest coefficient is not a monomial, so the series is not a unit")
        (e0, c0), = lead.items()
        inv_e = tuple(-x for x in e0)
        inv_c = Fraction(1) / c0
        top = self.order - v
        b: list[dict] = [{inv_e: _norm(inv_c)}]
        for n in range(1, top + 1):
            acc: dict = {}
            for i in range(1, n + 1):
                a_i = self.terms.get(v + i)
                if not a_i or not b[n - i]:
                    continue
                for e1, c1 in a_i.items():
                    for e2, c2 in b[n - i].items():
                        e = tuple(x + y for x, y in zip(e1, e2))
                        acc[e] = acc.get(e, 0) + c1 * c2
            b.append({tuple(x + y for x, y in zip(e, inv_e)): _norm(-c * inv_c) for e, c in acc.items() if c})
        return QSeries._raw(self.variables, -self.offset - v, dict(enumerate(b)), top)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QSeries):
            return NotImplemented
        if self.variables != other.variables:
            return False
        if (other.offset - self.offset).denominator != 1:
            return self.is_zero() and other.is_zero()
        top = min(self.offset + self.order, other.offset + other.order)

        def absolute(s):
            return {s.offset + n: p for n, p in s.terms.items() if s.offset + n <= top}

        return absolute(self) == absolute(other)

    __hash__ = None

    # -- evaluation ----------------------------------------------------------

    def evaluate_log(self, logs: Sequence[complex], log_q: complex) -> complex:
        """Sum c exp(sum e_i L_i + (offset + n) L_q) for logarithms L of the variables and q."""
        total = 0j
        for n, p in self.terms.items():
            qpart = (float(self.offset) + n) * log_q
            for e, c in p.items():
                total += float(c) * cmath.exp(qpart + sum(float(x) * l for x, l in zip(e, logs)))
        return total

    def evaluate(self, values: Sequence[complex], q: complex) -> complex:
        return self.evaluate_log([cmath.log(v) for v in values], cmath.log(q))

    def evaluate_modular(self, zetas: Sequence[complex], tau: complex) -> complex:
        """Evaluate at z_i = exp(2 pi i zeta_i), q = exp(2 pi i tau)."""
        two_pi_i = 2j * math.pi
        return self.evaluate_log([two_pi_i * z for z in zetas], two_pi_i * tau)

    # -- serialisation -------------------------------------------------------

    def to_json(self) -> dict:
        terms = {}
        for n in sorted(self.terms):
            terms[str(n)] = {",".join(_fmt(x) for x in e): (c if isinstance(c, int) else str(c))
                             for e, c in sorted(self.terms[n].items())}
        return {"variables": list(self.variables), "qOffset": str(self.offset),
                "order": self.order, "terms": terms}

    @classmethod
    def from_json(cls, data: Mapping) -> "QSeries":
        variables = tuple(data["variables"])
        terms = {}
        for n, row in data["terms"].items():
            terms[int(n)] = {
                (tuple(Fraction(x) for x in key.split(",")) if variables else ()): Fraction(c)
                for key, c in row.items()
            }
        return cls(variables, Fraction(data["qOffset"]), terms, data["order"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "QSeries":
        return cls.from_json(json.loads(text))

    def __repr__(self) -> str:
        return f"QSeries({self.variables}, offset={self.offset}, order={self.order}, {len(self.terms)} steps)"


# ---------------------------------------------------------------------------
# sparse expansion helpers
#
# Internal series are dicts {key tuple: int} with key[0] the q-step.  A
# "potential" that never decreases under any factor bounds the expansion.
# ---------------------------------------------------------------------------

def _times_binomial(series: dict, step: tuple, sign: int, keep: Callable[[tuple], bool]) -> dict:
    """series * (1 + sign x^step)."""
    out = dict(series)
    for k, c in series.items():
        k2 = tuple(a + b for a, b in zip(k, step))
        if keep(k2):
            v = out.get(k2, 0) + sign * c
            if v:
                out[k2] = v
            else:
                out.pop(k2, None)
    return out


def _over_binomial(series: dict, step: tuple, keep: Callable[[tuple], bool]) -> dict:
    """series / (1 - x^step), expanded geometrically; every step must strictly raise the potential."""
    out: dict = defaultdict(int)
    for k, c in series.items():
        while keep(k):
            out[k] += c
            k = tuple(a + b for a, b in zip(k, step))
    return {k: c for k, c in out.items() if c}


def _to_grades(series: dict, scale: Fraction = Fraction(1)) -> dict:
    terms: dict = defaultdict(dict)
    for k, c in series.items():
        terms[k[0]][tuple(Fraction(x) * scale for x in k[1:])] = c
    return terms


# ---------------------------------------------------------------------------
# eta and the fermionic products
# ---------------------------------------------------------------------------

def eta_series(N: int) -> QSeries:
    """q^{1/24} prod_{n>=1} (1 - q^n) to order N."""
    if N < 1:
        raise ValueError("order must be at least 1")
    s = {(0,): 1}
    keep = lambda k: k[0] <= N
    for n in range(1, N + 1):
        s = _times_binomial(s, (n,), -1, keep)
    return QSeries((), Fraction(1, 24), _to_grades(s), N)


def _fermionic(N: int, sign: int, omit: int | None, divided: bool) -> dict:
    s = {(0, 0): 1}
    keep = lambda k: k[0] <= N
    for i in range(1, N + 1):
        if i != omit:
            s = _times_binomial(s, (i, 1), sign, keep)
    for i in range(1, N + 2):
        if not (divided and i == 1):
            s = _times_binomial(s, (i - 1, -1), sign, keep)
    return s


def F_product(N: int, variable: str = "y", omit: int | None = None, divided: bool = False) -> QSeries:
    """F(y;q) = q^{1/12} prod_{i>=1} (1 - y q^i)(1 - y^{-1} q^{i-1}) to order N.

    omit=i0 drops the factor (1 - y q^{i0}); divided=True drops (1 - y^{-1}).
    """
    if N < 1:
        raise ValueError("order must be at least 1")
    return QSeries((variable,), Fraction(1, 12), _to_grades(_fermionic(N, -1, omit, divided)), N)


# ---------------------------------------------------------------------------
# integral Weyl orbits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineOrbitTerm:
    """det(w) e^{w . mu}: finite weight, drop of the delta coefficient, sign."""

    weight: FiniteWeight
    grade: Fraction
    sign: int


def _affine(mu) -> AffineWeight:
    if isinstance(mu, AdmissibleWeight):
        return mu.weight
    if isinstance(mu, AffineWeight):
        return mu
    raise TypeError(f"expected an admissible or affine weight, got {mu!r}")


def _n_bound(a: Fraction, kappa: Fraction, room: Fraction) -> int:
    # n with a*n + kappa*n^2 <= room lie inside this range
    a, kappa, room = float(a), float(kappa), float(max(room, 0))
    return int((abs(a) + math.sqrt(a * a + 4 * kappa * room)) / (2 * kappa)) + 1


def integral_weyl_orbit(u: int, mu, cutoff: Rational, v: int = 2) -> list[AffineOrbitTerm]:
    """All terms det(w) e^{w . mu} of the integral Weyl group with grade drop <= cutoff.

    Breadth-first search over shifted reflections in the integral real roots
    alpha + n delta.  Every reflection that lands within the cutoff is taken;
    a reflection that raises the grade can be undone by one that lowers it,
    so no term within the cutoff is reached only through terms beyond it.
    """
    aff = _affine(mu)
    kappa = aff.level + 3
    expected = Fraction(u) if v == 1 else Fraction(u, v)
    if kappa != expected:
        raise ValueError(f"level {aff.level} does not match u={u}, v={v}")
    cutoff = Fraction(cutoff)
    seed = aff.finite() + RHO
    seen: dict = {(seed, Fraction(0)): 1}
    queue = deque([(seed, Fraction(0))])
    while queue:
        x, drop = queue.popleft()
        sign = seen[(x, drop)]
        for root in POSITIVE_ROOTS:
            a = bilinear(x, root)
            nmax = _n_bound(a, kappa, cutoff - drop)
            for n in range(-nmax, nmax + 1):
                p = a + n * kappa
                if p.denominator != 1:
                    continue
                key = (x - root * p, drop + p * n)
                if key[1] > cutoff:
                    continue
                if key[1] < 0:
                    raise OrbitError(f"{aff} is not the top of its integral orbit")
                prev = seen.get(key)
                if prev is None:
                    seen[key] = -sign
                    queue.append(key)
                elif prev != -sign:
                    raise OrbitError(f"sign conflict at {key}: {aff} is not regular")
    terms = [AffineOrbitTerm(x - RHO, d, s) for (x, d), s in seen.items()]
    terms.sort(key=lambda t: (t.grade, t.weight.a1, t.weight.a2))
    return terms


# ---------------------------------------------------------------------------
# sl(3) characters in (z1, z2)
#
# Internal keys (n, c1, c2) stand for e^{top - c1 alpha1 - c2 alpha2} q^n.
# The potential c1 + c2 + 2n never decreases under a denominator factor.
# ---------------------------------------------------------------------------

def _root_int(w: FiniteWeight) -> tuple[int, int]:
    c1, c2 = w.root_coords()
    if c1.denominator != 1 or c2.denominator != 1:
        raise CharacterError(f"{w} is not in the root lattice")
    return int(c1), int(c2)


def _wk_steps(N: int) -> list[tuple[int, int, int]]:
    steps = []
    for root in POSITIVE_ROOTS:
        c1, c2 = _root_int(root)
        steps += [(n, c1, c2) for n in range(0, N + 1)]
        steps += [(n, -c1, -c2) for n in range(1, N + 1)]
    steps += [(n, 0, 0) for n in range(1, N + 1)] * 2
    return steps


def _from_root_keys(series: dict, top: FiniteWeight, offset: Fraction, order: int) -> QSeries:
    terms: dict = defaultdict(dict)
    for (n, c1, c2), c in series.items():
        w = top - ALPHA1 * c1 - ALPHA2 * c2
        terms[n][w.as_tuple()] = c
    return QSeries(("z1", "z2"), offset, terms, order)


def weyl_kac_denominator(N: int, depth: int, inverse: bool = False) -> QSeries:
    """prod over positive affine roots of (1 - e^{-root}), or its reciprocal.

    Kept: grade <= N and height + 2 * grade <= depth, where the height of
    e^{-beta} is the sum of the root coordinates of beta.
    """
    keep = lambda k: k[0] <= N and k[1] + k[2] + 2 * k[0] <= depth
    s = {(0, 0, 0): 1}
    for step in _wk_steps(N):
        s = _over_binomial(s, step, keep) if inverse else _times_binomial(s, step, -1, keep)
    return _from_root_keys(s, FiniteWeight(0, 0), Fraction(0), N)


def sl3_adm_character(u: int, mu, N: int, v: int = 2, depth: int | None = None) -> QSeries:
    """Character of the irreducible module of highest weight mu, to grade N.

    The orbit numerator is divided by the Weyl-Kac denominator.  Each grade
    is infinite in the z-variables, so weights deeper than depth below the
    top (in root height) are dropped.  The offset is h_mu - c/24.
    """
    aff = _affine(mu)
    depth = 2 * N + 4 if depth is None else depth
    kappa = aff.level + 3
    top = aff.finite()
    bound = depth + 2 * N
    keep = lambda k: k[0] <= N and k[1] + k[2] + 2 * k[0] <= bound
    s: dict = defaultdict(int)
    for t in integral_weyl_orbit(u, aff, N, v=v):
        if t.grade.denominator != 1:
            raise CharacterError(f"non-integral grade {t.grade} in the orbit of {aff}")
        c1, c2 = _root_int(top - t.weight)
        key = (int(t.grade), c1, c2)
        if keep(key):
            s[key] += t.sign
    s = {k: c for k, c in s.items() if c}
    for step in _wk_steps(N):
        s = _over_binomial(s, step, keep)
    s = {k: c for k, c in s.items() if k[1] + k[2] <= depth}
    h = bilinear(top, top + RHO * 2) / (2 * kappa)
    central = 8 * aff.level / kappa
    return _from_root_keys(s, top, h - central / 24, N)


# ---------------------------------------------------------------------------
# Bershadsky-Polyakov characters by reduction
#
# The prescription multiplies the family-0 sl(3) character by F(z) and
# (z1 z2)^{1/2} F(z1 z2)/(1 - z1 z2 q), removes the vanishing highest-root
# factor (1 - z1 z2 q) from the denominator and specialises
#     z1^{m1} z2^{m2} -> z^{(m2 - m1)/3} q^{-(2 m1 + m2)/3}.
# Internally a monomial is (q-step, 3 * z-exponent) relative to the image of
# the seed.
# ---------------------------------------------------------------------------

def _specialise(w: FiniteWeight, n: Rational = 0) -> tuple[Fraction, int]:
    z3 = w.a2 - w.a1
    if z3.denominator != 1:
        raise CharacterError(f"{w} has no integral z-exponent after specialisation")
    return n - (2 * w.a1 + w.a2) / 3, int(z3)


@dataclass(frozen=True)
class ReducedCharacter:
    """Numerator over a product of factors (1 - z^a q^b), after cancellation.

    numerator has the final offset and steps relative to it; the factor lists
    hold (z-exponent, q-step) pairs with step at most the truncation order.
    """

    offset: Fraction
    numerator: QSeries
    numerator_factors: tuple
    denominator_factors: tuple


def _affine_factor_steps(M: int) -> list[tuple[FiniteWeight, int]]:
    # every factor (1 - e^{f} q^n) of the Weyl-Kac denominator that can
    # reach specialised step <= M
    out = []
    for root in POSITIVE_ROOTS:
        out += [(-root, n) for n in range(0, M + 3)]
        out += [(root, n) for n in range(1, M + 3)]
    out += [(FiniteWeight(0, 0), n) for n in range(1, M + 1)] * 2
    return out


def _factor(f: FiniteWeight, n: int) -> tuple[int, int]:
    step, z3 = _specialise(f, n)
    if step.denominator != 1:
        raise CharacterError(f"factor e^{f} q^{n} has a fractional step")
    return z3, int(step)


def _qhr_factors(M: int) -> tuple[Counter, Counter]:
    """(remaining numerator factors, remaining denominator factors) as (z3, step), steps <= M."""
    den: Counter = Counter()
    highest = _factor(ALPHA3, 1)
    removed = False
    for f, n in _affine_factor_steps(M):
        if f == ALPHA3 and n == 1 and not removed:
            removed = True
            continue
        key = _factor(f, n)
        if key[1] <= M:
            den[key] += 1
    if not removed:
        raise CharacterError("highest-root factor (1 - z1 z2 q) not found in the denominator")
    num: list[tuple[int, int]] = []
    # F(z1 z2) without its i = 1 factor (1 - z1 z2 q)
    for i in range(1, M + 2):
        if i != 1:
            num.append(_factor(ALPHA3, i))
        num.append(_factor(-ALPHA3, i - 1))
    # F(z) with z = e^{alpha2} after specialisation
    for i in range(1, M + 2):
        num.append((3, i))
        num.append((-3, i - 1))
    leftover: Counter = Counter()
    for key in num:
        if key[1] > M:
            continue
        if den[key] > 0:
            den[key] -= 1
        else:
            leftover[key] += 1
    if den[highest] > 0 and highest[1] == 0 and highest[0] == 0:
        raise CharacterError("a vanishing factor survived cancellation")
    if den[(0, 0)]:
        raise CharacterError("a vanishing factor (1 - 1) survived cancellation")
    return +leftover, +den


def _qhr_seed(u: int, lam: AffineWeight):
    mu = admissible_from_family(u, "0", lam)
    aff = mu.weight
    kappa = Fraction(u, 2)
    top = aff.finite()
    e_top, j3 = _specialise(top)
    h = bilinear(top, top + RHO * 2) / (2 * kappa)
    k = level(u)
    central = 8 * k / kappa
    offset = e_top + (2 * k + 3) / 6 + Fraction(1, 6) - Fraction(1, 2) + h - central / 24
    return aff, kappa, top, e_top, j3, offset


def _lowest_step(lam_rho: FiniteWeight, kappa: Fraction) -> int:
    # E - E_top = (|X - kappa w1|^2 - |Lambda - kappa w1|^2)/(2 kappa) is bounded below
    return math.floor(-(lam_rho - OMEGA1 * kappa).norm2() / (2 * kappa))


def _qhr_numerator(u: int, lam: AffineWeight, N: int, seed_only: bool) -> dict:
    aff, kappa, top, e_top, j3, _ = _qhr_seed(u, lam)
    if seed_only:
        return {(0, j3): 1}
    lam_rho = top + RHO
    r2 = float((lam_rho - OMEGA1 * kappa).norm2() + 2 * kappa * N)
    reach = float(kappa) * math.sqrt(float(OMEGA1.norm2())) + math.sqrt(r2)
    cutoff = math.floor((reach * reach - float(lam_rho.norm2())) / (2 * float(kappa))) + 1
    num: dict = defaultdict(int)
    for t in integral_weyl_orbit(u, aff, max(cutoff, 0)):
        step, z3 = _specialise(t.weight, t.grade)
        step -= e_top
        if step.denominator != 1:
            raise CharacterError("orbit term with a fractional specialised step")
        if step <= N:
            num[(int(step), z3)] += t.sign
    return {k: c for k, c in num.items() if c}


def _divide_exact(poly: dict, a: int) -> dict:
    """poly / (1 - z^a) for z-exponents stored as integers; must be a polynomial."""
    out = {}
    by_class: dict = defaultdict(list)
    for e in poly:
        by_class[e % abs(a)].append(e)
    for es in by_class.values():
        lo, hi = min(es), max(es)
        acc = 0
        # r_e = p_e + r_{e - a}: start from the end the recursion grows away from
        rng = range(hi, lo - 1, -abs(a)) if a < 0 else range(lo, hi + 1, abs(a))
        for e in rng:
            acc += poly.get(e, 0)
            if acc:
                out[e] = acc
        if acc:
            raise CharacterError(f"grade is not divisible by (1 - z^{Fraction(a, 3)})")
    return out


def _reduced(u: int, lam: AffineWeight, N: int, seed_only: bool) -> ReducedCharacter:
    bp_weight(u, lam)
    offset = _qhr_seed(u, lam)[5]
    num = _qhr_numerator(u, lam, N, seed_only)
    leftover, den = _qhr_factors(N)
    terms: dict = defaultdict(dict)
    for (n, z3), c in num.items():
        terms[n][(Fraction(z3, 3),)] = c
    return ReducedCharacter(
        offset,
        QSeries(("z",), offset, terms, N),
        tuple(sorted((Fraction(a, 3), b) for a, b in leftover.elements())),
        tuple(sorted((Fraction(a, 3), b) for a, b in den.elements())),
    )


def qhr_reduced_form(u: int, lam: AffineWeight, N: int) -> ReducedCharacter:
    return _reduced(u, lam, N, False)


def qhr_verma_reduced_form(u: int, lam: AffineWeight, N: int) -> ReducedCharacter:
    """The prescription applied to the single seed term of the orbit."""
    return _reduced(u, lam, N, True)


@lru_cache(maxsize=None)
def _qhr_cached(u: int, lam: AffineWeight, N: int) -> QSeries:
    aff, kappa, top, e_top, j3, offset = _qhr_seed(u, lam)
    low = min(0, _lowest_step(top + RHO, kappa))
    M = N - low
    s = _qhr_numerator(u, lam, N, False)
    leftover, den = _qhr_factors(M)
    keep = lambda k: k[0] <= N
    for (a, b), m in sorted(leftover.items()):
        for _ in range(m):
            s = _times_binomial(s, (b, a), -1, keep)
    flat = []
    for (a, b), m in sorted(den.items()):
        if b == 0:
            flat += [a] * m
            continue
        for _ in range(m):
            s = _over_binomial(s, (b, a), keep)
    grades: dict = defaultdict(dict)
    for (n, z3), c in s.items():
        grades[n][z3] = c
    for a in flat:
        grades = {n: _divide_exact(p, a) for n, p in grades.items()}
    grades = {n: p for n, p in grades.items() if p}
    if any(n < 0 for n in grades):
        raise CharacterError(f"terms below the top survive for {lam}")
    if 0 not in grades:
        raise CharacterError(f"empty top space for {lam}")
    w = bp_weight(u, lam)
    if offset != w.Delta - c_bp(u) / 24:
        raise CharacterError(f"offset {offset} differs from Delta - c/24 = {w.Delta - c_bp(u) / 24}")
    terms = {n: {(Fraction(e, 3),): c for e, c in p.items()} for n, p in grades.items()}
    return QSeries(("z",), offset, terms, N)


def qhr_character(u: int, lam: AffineWeight, N: int = DEFAULT_ORDER) -> QSeries:
    """ch[B_lambda](z; q) to order N, with offset Delta_lambda - c/24."""
    if not isinstance(u, int) or u < 3 or u % 2 == 0:
        raise ValueError(f"u must be an odd integer >= 3, got {u!r}")
    bp_weight(u, lam)
    return _qhr_cached(u, lam, N)


# ---------------------------------------------------------------------------
# spectral flow
# ---------------------------------------------------------------------------

def sf_character_transport(g: Coweight, ch: QSeries, k: Rational, order: int | None = None) -> QSeries:
    """z1^{k g1} z2^{k g2} q^{|g|^2 k/2} ch(z1 q^{c1}, z2 q^{c2}; q), c the root coordinates of g.

    Every input term is carried; pass order to truncate the result.
    """
    if ch.variables != ("z1", "z2"):
        raise ValueError("sl(3) transport needs a series in (z1, z2)")
    if g.is_zero():
        return ch if order is None else ch.truncate(order)
    k = Fraction(k)
    c1, c2 = g.coroot_coords()
    shift = g.norm2() * k / 2

    def move(n, e):
        return ch.offset + n + c1 * e[0] + c2 * e[1] + shift, (e[0] + k * g.g1, e[1] + k * g.g2)

    out = ch.map_exponents(move)
    return out if order is None else out.truncate(order)


def bp_sf_character_transport(ell: int, ch: QSeries, u: int, order: int) -> QSeries:
    """BP spectral flow: (j, Delta) -> (j + k' ell, Delta + ell j + k' ell (ell + 1)/2), k' = (u - 3)/3.

    Terms of high grade may flow below the known range; order says how much
    of the result to keep and is the caller's responsibility.
    """
    if ch.variables != ("z",):
        raise ValueError("BP transport needs a series in z")
    kp = Fraction(u - 3, 3)

    def move(n, e):
        return ch.offset + n + ell * e[0] + kp * ell * (ell + 1) / 2, (e[0] + kp * ell,)

    return ch.map_exponents(move).truncate(order)


# ---------------------------------------------------------------------------
# free fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormalDeltaSeries:
    """prod v^{p_v} * delta(x^m) * series, with the delta function kept formal.

    coset is the weight class [mu] or [nu] in R/Z; flow is the spectral flow index.
    """

    kind: str
    coset: Fraction
    flow: int
    prefactor: dict
    delta: tuple
    series: QSeries
    top_weight: Fraction = Fraction(0)


def _inv_eta_squared(N: int) -> QSeries:
    eta = eta_series(N)
    inv = eta.inverse()
    return inv * inv


FREE_FIELD_KINDS = ("fermionic-ch", "fermionic-sch", "ghost-relaxed", "ghost-vacuum", "lattice-relaxed")


def free_field_characters(kind: str, N: int = DEFAULT_ORDER, **params):
    """Characters of the free-field building blocks.

    fermionic-ch: q^{1/12} prod (1 + y q^i)(1 + y^{-1} q^{i-1}).
    fermionic-sch: F(y; q).
    ghost-vacuum: q^{-1/12} / prod (1 - y q^i)(1 - y^{-1} q^{i-1}), expanded in
        y^{-1}; params depth bounds how far below y^0 each grade is kept.
    ghost-relaxed (mu, flow=0): y^mu delta(y) / eta^2.
    lattice-relaxed (nu, u, flow=0): z_a^{flow-1} z_d^{2 nu} delta(z_d^2) / eta^2, top weight k/3.
    """
    if kind == "fermionic-ch":
        return QSeries(("y",), Fraction(1, 12), _to_grades(_fermionic(N, 1, None, False)), N)
    if kind == "fermionic-sch":
        return F_product(N)
    if kind == "ghost-vacuum":
        depth = int(params.get("depth", N))
        bound = depth + N
        # potential n - (y exponent) never decreases
        keep = lambda k: k[0] <= N and k[0] - k[1] <= bound
        s = {(0, 0): 1}
        for i in range(1, N + 1):
            s = _over_binomial(s, (i, 1), keep)
        for i in range(1, N + 2):
            s = _over_binomial(s, (i - 1, -1), keep)
        s = {k: c for k, c in s.items() if k[1] >= -depth}
        return QSeries(("y",), Fraction(-1, 12), _to_grades(s), N)
    if kind == "ghost-relaxed":
        mu = Fraction(params["mu"]) % 1
        flow = int(params.get("flow", 0))
        return FormalDeltaSeries(kind, mu, flow, {"y": mu}, ("y", 1), _inv_eta_squared(N))
    if kind == "lattice-relaxed":
        nu = Fraction(params["nu"]) % 1
        flow = int(params.get("flow", 0))
        k = level(int(params["u"]))
        return FormalDeltaSeries(kind, nu, flow, {"za": Fraction(flow - 1), "zd": 2 * nu}, ("zd", 2),
                                 _inv_eta_squared(N), k / 3)
    raise ValueError(f"unknown free-field kind {kind!r}; expected one of {FREE_FIELD_KINDS}")


@dataclass(frozen=True)
class GeneralizedCharacter:
    """BP character times ghost and lattice factors for sigma^g(R^lambda_{mu,nu})."""

    label: RelaxedLabel
    bp_label: AffineWeight
    bp: QSeries
    ghost: FormalDeltaSeries
    lattice: FormalDeltaSeries
    u: int

    @property
    def top_conformal_weight(self) -> Fraction:
        """Sum of the component top weights (the conformal grade of the top when g = 0)."""
        return bp_weight(self.u, self.bp_label).Delta + self.ghost.top_weight + self.lattice.top_weight


def _gamma_pair(gamma, g: Coweight) -> Fraction:
    if isinstance(gamma, GammaCoset):
        return gamma.pair_mod1(g)
    raise TypeError("generalised characters need an exact gamma class")


def generalized_relaxed_character(u: int, label: RelaxedLabel, N: int = DEFAULT_ORDER) -> GeneralizedCharacter:
    """Factor sigma^g(R^lambda_gamma) into BP, ghost and lattice pieces.

    With gamma = (j + mu + u/6) alpha2 + (nu - u/6) alpha3: nu = <gamma, w1^> + u/6
    and mu = <gamma, w2^> - j - nu.  Flow by g moves the BP label by
    nabla^{<alpha2, g>}, the ghost flow by <alpha2, g>, the lattice flow by
    <alpha3, g> and the lattice coset by <alpha1, g> u/6.
    """
    g = label.g
    j = bp_charge(label.lam)
    nu = (_gamma_pair(label.gamma, CW1) + Fraction(u, 6)) % 1
    mu = (_gamma_pair(label.gamma, CW2) - j - nu) % 1
    ell = g.g2
    m = g.g1 + g.g2
    bp_lab = label.lam.nabla(ell)
    ghost = free_field_characters("ghost-relaxed", N, mu=mu, flow=ell)
    lattice = free_field_characters("lattice-relaxed", N, nu=nu + g.g1 * Fraction(u, 6), u=u, flow=m)
    return GeneralizedCharacter(label, bp_lab, qhr_character(u, bp_lab, N), ghost, lattice, u)


# ---------------------------------------------------------------------------
# numerics
# ---------------------------------------------------------------------------

def numeric_t_check(u: int, lam: AffineWeight, zeta: complex, tau: complex, N: int = DEFAULT_ORDER) -> float:
    """|ch(zeta; tau + 1) - T ch(zeta; tau)| / |T ch(zeta; tau)|."""
    ch = qhr_character(u, lam, N)
    rhs = bp_tmatrix(u, lam).to_complex() * ch.evaluate_modular((zeta,), tau)
    lhs = ch.evaluate_modular((zeta,), tau + 1)
    return abs(lhs - rhs) / abs(rhs)


def _tail(ch: QSeries, zeta: complex, tau: complex) -> tuple[float, float, float]:
    """(|value|, |grade N part|, |grade N/2 part|) in absolute-value sums."""
    total = ch.evaluate_modular((zeta,), tau)

    def size(n):
        p = ch.terms.get(n, {})
        return sum(abs(float(c) * cmath.exp(2j * math.pi * (float(e[0]) * zeta + (float(ch.offset) + n) * tau)))
                   for e, c in p.items())

    last = max((size(n) for n in range(max(ch.order - 1, 0), ch.order + 1)), default=0.0)
    return abs(total), last, size(ch.order // 2)


def _check_tails(chars: list[QSeries], points: list[tuple[complex, complex]], tol: float) -> None:
    N = chars[0].order
    worst, estimate = 0.0, None
    for zeta, tau in points:
        for ch in chars:
            total, last, mid = _tail(ch, zeta, tau)
            rel = last / total if total else math.inf
            if rel > worst:
                worst = rel
                half = N - N // 2
                ratio = (last / mid) ** (1 / half) if mid and last else None
                estimate = None
                if ratio is not None and ratio < 1:
                    estimate = N + math.ceil(math.log(tol / rel) / math.log(ratio))
    if worst > tol:
        raise TailError(f"truncation tail {worst:.2e} exceeds tolerance {tol:.1e}", estimate)


def _bp_values(u: int, N: int, zeta: complex, tau: complex, chars) -> list[complex]:
    return [ch.evaluate_modular((zeta,), tau) for ch in chars]


def _s_sides(u: int, zeta: complex, tau: complex, N: int, tol: float):
    labels = enumerate_P(u)
    chars = [qhr_character(u, lam, N) for lam in labels]
    z_s, t_s = zeta / tau, -1 / tau
    _check_tails(chars, [(z_s, t_s), (zeta, tau)], tol)
    lhs = _bp_values(u, N, z_s, t_s, chars)
    vals = _bp_values(u, N, zeta, tau, chars)
    S = _bp_complex(u)
    rhs = [sum(S[i][j] * vals[j] for j in range(len(labels))) for i in range(len(labels))]
    return lhs, rhs


def numeric_s_check(u: int, zeta: complex, tau: complex, N: int = DEFAULT_ORDER, tol: float = 1e-8) -> float:
    """Max relative discrepancy of ch_lambda / ch_vacuum between the two sides of the S-transform.

    Left: ch_lambda(zeta/tau; -1/tau).  Right: sum_lambda' S ch_lambda'(zeta; tau).
    Raises TailError (with an order estimate) when the truncation tail is
    larger than tol at either point.
    """
    if complex(tau).imag <= 0:
        raise ValueError("tau must lie in the upper half plane")
    if len(enumerate_P(u)) == 1:
        return 0.0
    lhs, rhs = _s_sides(u, zeta, tau, N, tol)
    err = 0.0
    for a, b in zip(lhs, rhs):
        left, right = a / lhs[0], b / rhs[0]
        err = max(err, abs(left - right) / abs(right))
    return err


def automorphy_diagnostic(u: int, zetas: Sequence[complex], tau: complex, N: int = DEFAULT_ORDER,
                          tol: float = 1e-8) -> dict:
    """Residual of the absolute S-transform after dividing by exp(pi i kappa zeta^2 / tau).

    kappa = (2k + 3)/3 is read off the J-J OPE.  Reported only.
    """
    kappa = (2 * float(level(u)) + 3) / 3
    out = {}
    for zeta in zetas:
        lhs, rhs = _s_sides(u, zeta, tau, N, tol)
        factor = cmath.exp(1j * math.pi * kappa * zeta * zeta / tau)
        out[zeta] = float(max(abs(a / factor - b) / abs(b) for a, b in zip(lhs, rhs)))
    return out


def character_gram_matrix(u: int, points: Sequence[tuple[complex, complex]], N: int = DEFAULT_ORDER) -> list[list[complex]]:
    """Rows: sample points (zeta, tau); columns: ch_lambda for lambda in enumerate_P(u)."""
    chars = [qhr_character(u, lam, N) for lam in enumerate_P(u)]
    return [[ch.evaluate_modular((zeta,), tau) for ch in chars] for zeta, tau in points]
