"""Fusion multiplicities and Grothendieck fusion of module classes.

Two halves live here.  The first computes the rational fusion rules of the
sl(3) models at level u-3 three ways: an exact Verlinde sum with the WZW
S-matrix, the same sum with the BP S-matrix, and Kac-Walton folding of
tensor product multiplicities.  The second manipulates classes of relaxed,
semirelaxed and highest-weight BP modules in the Grothendieck ring.

Infinite identities are handled through *rays*: formal sums
sum_{n>=0} s^n X(n), where X(n) is a module class whose flow, nabla power and
gamma depend affinely on n.  Two rays along the same line differ by finitely
many classes, so rays can be moved to a canonical base point on their line
and collected exactly.  This is the telescoping used throughout.
"""

from __future__ import annotations

import cmath
import itertools
import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Union

from .cyclo import CycNum, Phase, cyc_dot, lift_common
from .modular import (
    PoleError,
    RelaxedLabel,
    bp_smatrix,
    hw_skernel,
    relaxed_skernel,
    semirelaxed_skernel,
    wzw_smatrix,
)
from .weights import (
    ALPHA2,
    ALPHA3,
    COROOT3,
    CW0,
    CW1,
    CW2,
    CW3,
    IDENTITY,
    OMEGA1,
    OMEGA2,
    OMEGA3,
    ON_WALL,
    POSITIVE_ROOTS,
    RHO,
    S1,
    S2,
    S3,
    WEYL_GROUP,
    ZERO,
    AffineWeight,
    Coweight,
    FiniteWeight,
    GammaCoset,
    WeylElement,
    alcove_reduce,
    bilinear,
    bp_charge,
    enumerate_P,
    gamma1_rep,
    gamma2_rep,
    semirelaxed_condition,
    vacuum,
)


class InvariantViolation(ArithmeticError):
    """An exact computation produced a value its theory forbids."""


class TelescopingError(ArithmeticError):
    """A formal series did not collapse to finitely many classes and rays."""


class UnsupportedFusion(ValueError):
    """No rule is available for the requested pair of classes."""


# ===========================================================================
# finite-dimensional sl(3) data
# ===========================================================================

def _dominant_conjugate(x: FiniteWeight) -> FiniteWeight:
    while x.a1 < 0 or x.a2 < 0:
        x = S1.act(x) if x.a1 < 0 else S2.act(x)
    return x


def _is_weight_of(lam: FiniteWeight, mu: FiniteWeight) -> bool:
    diff = lam - _dominant_conjugate(mu)
    c1, c2 = diff.root_coords()
    return c1.denominator == 1 and c2.denominator == 1 and c1 >= 0 and c2 >= 0


def _check_dominant(lam: FiniteWeight) -> None:
    if not lam.is_integral() or lam.a1 < 0 or lam.a2 < 0:
        raise ValueError(f"{lam} is not dominant integral")


@lru_cache(maxsize=None)
def _weight_system(a1: int, a2: int) -> dict[FiniteWeight, int]:
    """All weight multiplicities of V(a1 w1 + a2 w2), by Freudenthal's recursion."""
    lam = FiniteWeight(a1, a2)
    top = (lam + RHO).norm2()
    mult = {lam: 1}
    depth = 0
    while True:
        depth += 1
        found = False
        for n1 in range(depth + 1):
            mu = lam - ALPHA2 * (depth - n1) - (ALPHA3 - ALPHA2) * n1
            if not _is_weight_of(lam, mu):
                continue
            found = True
            acc = Fraction(0)
            for alpha in POSITIVE_ROOTS:
                k = 1
                while (m := mult.get(mu + alpha * k)) is not None:
                    acc += m * bilinear(mu + alpha * k, alpha)
                    k += 1
            val = 2 * acc / (top - (mu + RHO).norm2())
            if val.denominator != 1 or val <= 0:
                raise InvariantViolation(f"Freudenthal gave {val} at {mu}")
            mult[mu] = int(val)
        if not found:
            return mult


def weight_multiplicities(lam: FiniteWeight) -> dict[FiniteWeight, int]:
    _check_dominant(lam)
    return dict(_weight_system(int(lam.a1), int(lam.a2)))


def freudenthal_multiplicity(lam: FiniteWeight, mu: FiniteWeight) -> int:
    """Dimension of the mu weight space of the irreducible module V(lam)."""
    _check_dominant(lam)
    return _weight_system(int(lam.a1), int(lam.a2)).get(mu, 0)


def weyl_dimension(lam: FiniteWeight) -> int:
    a, b = lam.a1 + 1, lam.a2 + 1
    return int(a * b * (a + b) / 2)


def tensor_multiplicity(lam: FiniteWeight, mu: FiniteWeight, nu: FiniteWeight) -> int:
    """Multiplicity of V(nu) in V(lam) x V(mu): sum_w det(w) mult_mu(w.nu - lam)."""
    for x in (lam, mu, nu):
        _check_dominant(x)
    wts = _weight_system(int(mu.a1), int(mu.a2))
    total = sum(w.det * wts.get(w.act_shifted(nu) - lam, 0) for w in WEYL_GROUP)
    if total < 0:
        raise InvariantViolation("negative tensor multiplicity")
    return total


@lru_cache(maxsize=None)
def _tensor_decomposition(lam: FiniteWeight, mu: FiniteWeight) -> dict[FiniteWeight, int]:
    out = {}
    for eta in _weight_system(int(mu.a1), int(mu.a2)):
        nu = lam + eta
        if nu.a1 >= 0 and nu.a2 >= 0 and nu not in out:
            n = tensor_multiplicity(lam, mu, nu)
            if n:
                out[nu] = n
    return out


def tensor_decomposition(lam: FiniteWeight, mu: FiniteWeight) -> dict[FiniteWeight, int]:
    _check_dominant(lam)
    _check_dominant(mu)
    return dict(_tensor_decomposition(lam, mu))


# ===========================================================================
# rational fusion rules
# ===========================================================================

def _check_label(u: int, lam: AffineWeight) -> None:
    if lam not in enumerate_P(u):
        raise ValueError(f"{lam.text()} is not in P^{u - 3}")


@lru_cache(maxsize=None)
def _kac_walton_row(u: int, lam: AffineWeight, mu: AffineWeight) -> dict[AffineWeight, int]:
    out: dict[AffineWeight, int] = defaultdict(int)
    for nu, n in _tensor_decomposition(lam.finite(), mu.finite()).items():
        red = alcove_reduce(nu, u)
        if red is ON_WALL:
            continue
        label, det = red
        out[label] += det * n
    for label, n in out.items():
        if n < 0:
            raise InvariantViolation(f"negative Kac-Walton coefficient at {label.text()}")
    return {k: v for k, v in out.items() if v}


def kac_walton_fusion(u: int, lam: AffineWeight, mu: AffineWeight, nu: AffineWeight) -> int:
    """Level u-3 fusion coefficient by folding tensor products into the alcove."""
    for x in (lam, mu, nu):
        _check_label(u, x)
    return _kac_walton_row(u, lam, mu).get(nu, 0)


@lru_cache(maxsize=None)
def _verlinde_table(u: int, which: str) -> dict[tuple[int, int, int], int]:
    smat = wzw_smatrix(u) if which == "wzw" else bp_smatrix(u)
    labels = smat.rows
    n = len(labels)
    flat = lift_common(*(x for row in smat.entries for x in row))
    ent = [flat[i * n:(i + 1) * n] for i in range(n)]
    v = labels.index(vacuum(u))
    inv_vac = [ent[v][k].inverse() for k in range(n)]
    conj_cols = [[ent[c][k].conj() for k in range(n)] for c in range(n)]
    table = {}
    for a in range(n):
        ratio = [ent[a][k] * inv_vac[k] for k in range(n)]
        for b in range(a, n):
            vec = [ratio[k] * ent[b][k] for k in range(n)]
            for c in range(n):
                val = cyc_dot(vec, conj_cols[c])
                if not val.is_rational():
                    raise InvariantViolation(f"irrational Verlinde value for {labels[a]}, {labels[b]}, {labels[c]}")
                q = val.as_rational()
                if q.denominator != 1 or q < 0:
                    raise InvariantViolation(f"Verlinde value {q} is not a nonnegative integer")
                table[a, b, c] = table[b, a, c] = int(q)
    return table


def verlinde_wzw(u: int, lam: AffineWeight, mu: AffineWeight, nu: AffineWeight) -> int:
    """Exact sum_L S_{lam L} S_{mu L} conj(S_{nu L}) / S_{vac L} with the WZW S-matrix."""
    labels = enumerate_P(u)
    for x in (lam, mu, nu):
        _check_label(u, x)
    return _verlinde_table(u, "wzw")[labels.index(lam), labels.index(mu), labels.index(nu)]


@lru_cache(maxsize=None)
def _bp_table_checked(u: int) -> dict[tuple[int, int, int], int]:
    if u % 2 == 0:
        raise ValueError("BP fusion needs odd u")
    bp = _verlinde_table(u, "bp")
    wzw = _verlinde_table(u, "wzw")
    if bp != wzw:
        bad = next(k for k in bp if bp[k] != wzw[k])
        raise InvariantViolation(f"BP and WZW fusion differ at index triple {bad}")
    return bp


def bp_fusion(u: int, lam: AffineWeight, mu: AffineWeight, nu: AffineWeight) -> int:
    """Verlinde sum with the BP S-matrix, checked against the WZW value."""
    labels = enumerate_P(u)
    for x in (lam, mu, nu):
        _check_label(u, x)
    return _bp_table_checked(u)[labels.index(lam), labels.index(mu), labels.index(nu)]


FUSION_METHODS = ("verlinde", "kac-walton", "bp")


@dataclass(frozen=True)
class FusionTable:
    """Fusion coefficients N_{lam mu}^nu over P^{u-3}."""

    u: int
    labels: tuple[AffineWeight, ...]
    coefficients: dict = field(compare=True)

    def get(self, lam: AffineWeight, mu: AffineWeight, nu: AffineWeight) -> int:
        return self.coefficients.get((lam, mu, nu), 0)

    __call__ = get

    def products(self, lam: AffineWeight, mu: AffineWeight) -> dict[AffineWeight, int]:
        return {nu: n for nu in self.labels if (n := self.get(lam, mu, nu))}

    def violations(self) -> list[str]:
        out = []
        vac = vacuum(self.u)
        for (a, b, c), n in self.coefficients.items():
            if not isinstance(n, int) or n < 0:
                out.append(f"N[{a.text()},{b.text()}->{c.text()}] = {n}")
        for a in self.labels:
            for c in self.labels:
                if self.get(vac, a, c) != (a == c):
                    out.append(f"vacuum row fails at {a.text()}->{c.text()}")
                for b in self.labels:
                    if self.get(a, b, c) != self.get(b, a, c):
                        out.append(f"asymmetric at {a.text()},{b.text()}")
        return out

    def is_associative(self) -> bool:
        labs = self.labels
        prod = {(a, b): self.products(a, b) for a in labs for b in labs}
        for a, b, c in itertools.product(labs, repeat=3):
            left: dict = defaultdict(int)
            right: dict = defaultdict(int)
            for s, n in prod[a, b].items():
                for t, m in prod[s, c].items():
                    left[t] += n * m
            for s, n in prod[b, c].items():
                for t, m in prod[a, s].items():
                    right[t] += n * m
            if dict(left) != dict(right):
                return False
        return True

    def to_json(self) -> str:
        rows = [{"lambda": a.text(), "mu": b.text(), "nu": c.text(), "N": n}
                for (a, b, c), n in sorted(self.coefficients.items(), key=lambda kv: tuple(x.key() for x in kv[0]))
                if n]
        return json.dumps({"u": self.u, "labels": [x.text() for x in self.labels], "coefficients": rows},
                          indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FusionTable":
        data = json.loads(text)
        labels = tuple(AffineWeight.parse(x) for x in data["labels"])
        coeffs = {}
        for row in data["coefficients"]:
            key = (AffineWeight.parse(row["lambda"]), AffineWeight.parse(row["mu"]), AffineWeight.parse(row["nu"]))
            coeffs[key] = int(row["N"])
        return cls(int(data["u"]), labels, coeffs)


@lru_cache(maxsize=None)
def fusion_table(u: int, method: str = "verlinde") -> FusionTable:
    labels = tuple(enumerate_P(u))
    if method == "kac-walton":
        coeffs = {}
        for a in labels:
            for b in labels:
                for c, n in _kac_walton_row(u, a, b).items():
                    coeffs[a, b, c] = n
        return FusionTable(u, labels, coeffs)
    if method == "verlinde":
        table = _verlinde_table(u, "wzw")
    elif method == "bp":
        table = _bp_table_checked(u)
    else:
        raise ValueError(f"unknown fusion method {method!r}; expected one of {FUSION_METHODS}")
    coeffs = {(labels[a], labels[b], labels[c]): n for (a, b, c), n in table.items() if n}
    return FusionTable(u, labels, coeffs)


@lru_cache(maxsize=None)
def _bp_products(u: int, lam: AffineWeight, mu: AffineWeight) -> tuple[tuple[AffineWeight, int], ...]:
    return tuple(fusion_table(u, "bp").products(lam, mu).items())


# ===========================================================================
# values affine in formal summation indices
# ===========================================================================

Value = Union[Coweight, GammaCoset, int]


def _norm(x: Value) -> Value:
    return x % 3 if isinstance(x, int) else x


def _zero(x: Value) -> bool:
    return x == 0 if isinstance(x, int) else x.is_zero()


def _times(x: Value, n: int) -> Value:
    if isinstance(x, GammaCoset):
        return x.scale(n)
    return x * n


@dataclass(frozen=True)
class Lin:
    """const + sum_v slope_v * n_v over formal integer indices n_v.

    Values are coweights, classes in h*/Q, or nabla powers (ints mod 3).
    """

    const: Value
    slopes: tuple = ()

    def __post_init__(self):
        items = self.slopes.items() if isinstance(self.slopes, dict) else self.slopes
        clean = tuple(sorted((v, _norm(s)) for v, s in items if not _zero(_norm(s))))
        object.__setattr__(self, "const", _norm(self.const))
        object.__setattr__(self, "slopes", clean)

    @staticmethod
    def of(x: "Lin | Value") -> "Lin":
        return x if isinstance(x, Lin) else Lin(x)

    def _zero_value(self) -> Value:
        return _times(self.const, 0)

    @property
    def vars(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.slopes)

    @property
    def is_constant(self) -> bool:
        return not self.slopes

    def slope(self, var: str) -> Value:
        return dict(self.slopes).get(var, self._zero_value())

    def __add__(self, other: "Lin | Value") -> "Lin":
        other = Lin.of(other)
        slopes = dict(self.slopes)
        for v, s in other.slopes:
            slopes[v] = slopes[v] + s if v in slopes else s
        return Lin(self.const + other.const, slopes)

    def __neg__(self) -> "Lin":
        return Lin(_times(self.const, -1), tuple((v, _times(s, -1)) for v, s in self.slopes))

    def __sub__(self, other: "Lin | Value") -> "Lin":
        return self + (-Lin.of(other))

    def scale(self, n: int) -> "Lin":
        return Lin(_times(self.const, n), tuple((v, _times(s, n)) for v, s in self.slopes))

    def map(self, f: Callable[[Value], Value]) -> "Lin":
        return Lin(f(self.const), tuple((v, f(s)) for v, s in self.slopes))

    def shift(self, var: str, k: int) -> "Lin":
        """Substitute n_var -> n_var + k."""
        return Lin(self.const + _times(self.slope(var), k), self.slopes)

    def subs(self, var: str, k: int) -> "Lin":
        """Substitute n_var -> k."""
        return Lin(self.const + _times(self.slope(var), k), tuple(p for p in self.slopes if p[0] != var))

    def drop(self, var: str) -> "Lin":
        return Lin(self.const, tuple(p for p in self.slopes if p[0] != var))

    def rename(self, var: str, new: str) -> "Lin":
        return Lin(self.const, tuple((new if v == var else v, s) for v, s in self.slopes))

    def add_slope(self, var: str, s: Value) -> "Lin":
        return self + Lin(self._zero_value(), ((var, s),))

    def value(self) -> Value:
        if self.slopes:
            raise ValueError("value still depends on summation indices")
        return self.const


def _fmt_frac(x: Fraction) -> str:
    return str(Fraction(x))


def _value_text(x: Value) -> str:
    if isinstance(x, Coweight):
        return f"{_fmt_frac(x.g1)},{_fmt_frac(x.g2)}"
    if isinstance(x, GammaCoset):
        return x.text()
    return str(x)


def _lin_text(x: Lin) -> str:
    out = _value_text(x.const)
    for v, s in x.slopes:
        out += f"+{v}*({_value_text(s)})"
    return out


# ===========================================================================
# module classes
# ===========================================================================

KINDS = ("R", "S", "L0", "L1")
_KIND_TEXT = {"R": "R", "S": "S", "L0": "L0", "L1": "L1"}
_WEYL_ORDER = {w: i for i, w in enumerate(WEYL_GROUP)}


@dataclass(frozen=True)
class ModuleLabel:
    """The class [sigma^g w(M)] with M one of four base families.

    R: fully relaxed R^lam_gamma (any twist is absorbed into gamma).
    S: semirelaxed S^lam_gamma, gamma the untwisted parameter.
    L0: L(lam - (u/2) w0).   L1: L(Lambda^1_lam).
    The BP label is nabla^nab(mu); a constant nabla power is folded into mu.
    """

    kind: str
    mu: AffineWeight
    nab: Lin = Lin(0)
    g: Lin = Lin(CW0)
    w: WeylElement = IDENTITY
    gamma: Lin | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown module kind {self.kind!r}")
        nab = Lin.of(self.nab)
        g = Lin.of(self.g)
        gamma = None if self.gamma is None else Lin.of(self.gamma)
        if isinstance(gamma.const if gamma else None, FiniteWeight):
            gamma = Lin(GammaCoset(gamma.const), gamma.slopes)
        object.__setattr__(self, "mu", self.mu.nabla(nab.const))
        object.__setattr__(self, "nab", Lin(0, nab.slopes))
        object.__setattr__(self, "g", g)
        w = self.w
        if self.kind in ("R", "S"):
            if gamma is None:
                raise ValueError(f"{self.kind} classes need gamma")
            if self.kind == "R" and w != IDENTITY:
                gamma = gamma.map(lambda x: x.weyl(w))
                w = IDENTITY
            if self.kind == "S" and _WEYL_ORDER[w * S3] < _WEYL_ORDER[w]:
                # w and w s3 give the same ray since s3 fixes w3^
                gamma = gamma.map(lambda x: x.weyl(S3))
                w = w * S3
        elif gamma is not None:
            raise ValueError("highest-weight classes carry no gamma")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "gamma", gamma)

    # -- structure ----------------------------------------------------------
    def _lins(self) -> list[Lin]:
        return [self.nab, self.g] + ([self.gamma] if self.gamma is not None else [])

    @property
    def vars(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for x in self._lins():
            out |= x.vars
        return out

    @property
    def is_concrete(self) -> bool:
        return not self.vars

    def _remap(self, f: Callable[[Lin], Lin]) -> "ModuleLabel":
        return ModuleLabel(self.kind, self.mu, f(self.nab), f(self.g), self.w,
                           None if self.gamma is None else f(self.gamma))

    def shift(self, var: str, k: int) -> "ModuleLabel":
        return self._remap(lambda x: x.shift(var, k))

    def subs(self, var: str, k: int) -> "ModuleLabel":
        return self._remap(lambda x: x.subs(var, k))

    def rename(self, var: str, new: str) -> "ModuleLabel":
        return self._remap(lambda x: x.rename(var, new))

    def step(self, var: str) -> tuple:
        return (self.nab.slope(var), self.g.slope(var),
                None if self.gamma is None else self.gamma.slope(var))

    @property
    def lam(self) -> AffineWeight:
        if self.nab.slopes:
            raise ValueError("BP label depends on summation indices")
        return self.mu

    # -- automorphisms ----------------------------------------------------------
    def flowed(self, h: "Lin | Coweight") -> "ModuleLabel":
        return ModuleLabel(self.kind, self.mu, self.nab, self.g + h, self.w, self.gamma)

    def unflowed(self) -> "ModuleLabel":
        return ModuleLabel(self.kind, self.mu, self.nab, Lin(CW0), self.w, self.gamma)

    def twisted(self, v: WeylElement) -> "ModuleLabel":
        """v(sigma^g w M) = sigma^{v g} (v w) M."""
        g = self.g.map(v.act_coweight)
        if self.kind == "R":
            return ModuleLabel("R", self.mu, self.nab, g, IDENTITY, self.gamma.map(lambda x: x.weyl(v)))
        return ModuleLabel(self.kind, self.mu, self.nab, g, v * self.w, self.gamma)

    def conjugated(self) -> "ModuleLabel":
        """Conjugate a concrete relaxed class: (g, lambda, gamma) -> (d g, d nabla lambda, d gamma).

        lambda moves by the BP conjugation d nabla; with the bare swap d the
        relaxed fusion rule is not equivariant.  The map is an involution.
        """
        if self.kind != "R" or not self.is_concrete:
            raise ValueError("conjugation is implemented for concrete relaxed classes")
        g = self.g.const
        return ModuleLabel("R", self.mu.nabla(1).dynkin(), Lin(0), Coweight(g.g2, g.g1), IDENTITY,
                           GammaCoset(_swap(self.gamma.const.rep)))

    # -- text -----------------------------------------------------------------
    def text(self) -> str:
        labs = ",".join(_fmt_frac(x) for x in self.mu.labels)
        out = f"{_KIND_TEXT[self.kind]}:{labs}"
        if self.nab.slopes:
            out += f":nabla={_lin_text(self.nab)}"
        if self.g.slopes or not self.g.const.is_zero():
            out += f":g={_lin_text(self.g)}"
        if self.w != IDENTITY:
            out += f":w={self.w.name()}"
        if self.gamma is not None:
            out += f":gamma={_lin_text(self.gamma)}"
        return out

    def __repr__(self) -> str:
        return self.text()


def _swap(x: FiniteWeight) -> FiniteWeight:
    return FiniteWeight(x.a2, x.a1)


_KIND_ALIASES = {"R": "R", "S": "S", "L0": "L0", "Lw0": "L0", "L1": "L1", "LLambda1": "L1",
                 "L2": "L2", "LLambda2": "L2", "Lw1": "Lw1", "Lw2": "Lw2", "vac": "vac"}


def parse_label(text: str, u: int | None = None) -> ModuleLabel:
    """Parse 'KIND:l0,l1,l2[:g=a,b][:w=word][:gamma=c1,c2]'.

    KIND is R, S, L0 (also Lw0), L1, L2, Lw1, Lw2 or vac.  gamma is given in
    root coordinates.  The hw aliases are rewritten into L0/L1 classes:
    L(Lambda^2_lam) = sigma^{w2^} L0(lam), L(lam - (u/2) w1) = sigma^{w1^} L0(nabla lam),
    L(lam - (u/2) w2) = sigma^{w2^} L0(nabla^-1 lam), vacuum = L0(vac).
    """
    parts = [p.strip() for p in text.strip().split(":")]
    if len(parts) < 2 and parts[0] != "vac":
        raise ValueError(f"bad module label {text!r}")
    kind = _KIND_ALIASES.get(parts[0])
    if kind is None:
        raise ValueError(f"unknown module kind {parts[0]!r}")
    opts = {}
    rest = parts[1:]
    lam = None
    if rest and "=" not in rest[0]:
        lam = AffineWeight.parse(rest[0])
        rest = rest[1:]
    for p in rest:
        key, _, val = p.partition("=")
        opts[key.strip()] = val.strip()
    unknown = set(opts) - {"g", "w", "gamma"}
    if unknown:
        raise ValueError(f"unknown label fields {sorted(unknown)}")
    g = CW0
    if "g" in opts and opts["g"] not in ("0", ""):
        a, b = opts["g"].split(",")
        g = Coweight(Fraction(a), Fraction(b))
    w = WeylElement.from_word(opts.get("w", "e"))
    gamma = GammaCoset.parse(opts["gamma"]) if "gamma" in opts else None
    if kind == "vac":
        if u is None and lam is None:
            raise ValueError("vac needs u or an explicit label")
        lam = vacuum(u) if lam is None else lam
        kind = "L0"
    if lam is None:
        raise ValueError(f"label {text!r} has no Dynkin labels")
    if kind in ("R", "S"):
        if gamma is None:
            raise ValueError(f"{kind} labels need gamma=")
        return ModuleLabel(kind, lam, Lin(0), Lin(g), w, Lin(gamma))
    if gamma is not None:
        raise ValueError("highest-weight labels take no gamma")
    if kind == "L2":
        return ModuleLabel("L0", lam, Lin(0), Lin(g), w).twisted(IDENTITY).flowed(w.act_coweight(CW2))
    if kind == "Lw1":
        return ModuleLabel("L0", lam.nabla(1), Lin(0), Lin(g + w.act_coweight(CW1)), w)
    if kind == "Lw2":
        return ModuleLabel("L0", lam.nabla(-1), Lin(0), Lin(g + w.act_coweight(CW2)), w)
    return ModuleLabel(kind, lam, Lin(0), Lin(g), w)


def relaxed(lam: AffineWeight, gamma: GammaCoset | FiniteWeight, g: Coweight = CW0) -> ModuleLabel:
    return ModuleLabel("R", lam, Lin(0), Lin(g), IDENTITY, Lin(GammaCoset(_rep(gamma))))


def semirelaxed(lam: AffineWeight, gamma: GammaCoset | FiniteWeight, w: WeylElement = IDENTITY,
                g: Coweight = CW0) -> ModuleLabel:
    return ModuleLabel("S", lam, Lin(0), Lin(g), w, Lin(GammaCoset(_rep(gamma))))


def hw_omega0(lam: AffineWeight, w: WeylElement = IDENTITY, g: Coweight = CW0) -> ModuleLabel:
    """sigma^g w L(lam - (u/2) w0)."""
    return ModuleLabel("L0", lam, Lin(0), Lin(g), w)


def hw_lambda1(lam: AffineWeight, w: WeylElement = IDENTITY, g: Coweight = CW0) -> ModuleLabel:
    """sigma^g w L(Lambda^1_lam)."""
    return ModuleLabel("L1", lam, Lin(0), Lin(g), w)


def hw_lambda2(lam: AffineWeight, w: WeylElement = IDENTITY, g: Coweight = CW0) -> ModuleLabel:
    """sigma^g w L(Lambda^2_lam) = sigma^{g + w w2^} w L0(lam)."""
    return ModuleLabel("L0", lam, Lin(0), Lin(g + w.act_coweight(CW2)), w)


def _rep(gamma: GammaCoset | FiniteWeight) -> FiniteWeight:
    return gamma.rep if isinstance(gamma, GammaCoset) else gamma


@dataclass(frozen=True)
class Ray:
    """sum_{n>=0} sign^n [label(n)], the label written in the bound index '#'."""

    sign: int
    label: ModuleLabel

    BOUND = "#"

    def term(self, n: int) -> ModuleLabel:
        return self.label.subs(self.BOUND, n)

    def _remap(self, f: Callable[[ModuleLabel], ModuleLabel]) -> "Ray":
        return Ray(self.sign, f(self.label))

    @property
    def vars(self) -> frozenset[str]:
        return self.label.vars - {self.BOUND}

    def text(self) -> str:
        sign = "(-1)^n " if self.sign < 0 else ""
        return "sum_n " + sign + self.label.rename(self.BOUND, "n").text()

    def __repr__(self) -> str:
        return self.text()


Key = Union[ModuleLabel, Ray]


class GrothSum:
    """A finite Z-linear combination of module classes and rays."""

    __slots__ = ("_c",)

    def __init__(self, items: Iterable[tuple[Key, int]] | dict | None = None):
        self._c: dict[Key, int] = {}
        if items is None:
            return
        if isinstance(items, dict):
            items = items.items()
        for k, c in items:
            self.add(k, c)

    @classmethod
    def single(cls, key: Key, coeff: int = 1) -> "GrothSum":
        return cls([(key, coeff)])

    def add(self, key: Key, coeff: int = 1) -> None:
        if not coeff:
            return
        val = self._c.get(key, 0) + coeff
        if val:
            self._c[key] = val
        else:
            self._c.pop(key, None)

    def add_sum(self, other: "GrothSum", coeff: int = 1) -> None:
        for k, c in other._c.items():
            self.add(k, c * coeff)

    def items(self):
        return self._c.items()

    def keys(self):
        return self._c.keys()

    def __iter__(self) -> Iterator[Key]:
        return iter(self._c)

    def __len__(self) -> int:
        return len(self._c)

    def __getitem__(self, key: Key) -> int:
        return self._c.get(key, 0)

    def __eq__(self, other) -> bool:
        return isinstance(other, GrothSum) and self._c == other._c

    def __add__(self, other: "GrothSum") -> "GrothSum":
        out = GrothSum(self._c)
        out.add_sum(other)
        return out

    def __sub__(self, other: "GrothSum") -> "GrothSum":
        out = GrothSum(self._c)
        out.add_sum(other, -1)
        return out

    def scale(self, n: int) -> "GrothSum":
        return GrothSum((k, c * n) for k, c in self._c.items())

    def map(self, f: Callable[[ModuleLabel], ModuleLabel]) -> "GrothSum":
        return GrothSum((k._remap(f) if isinstance(k, Ray) else f(k), c) for k, c in self._c.items())

    def flowed(self, h: "Lin | Coweight") -> "GrothSum":
        return self.map(lambda x: x.flowed(h))

    def twisted(self, v: WeylElement) -> "GrothSum":
        return self.map(lambda x: x.twisted(v))

    @property
    def vars(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for k in self._c:
            out |= k.vars
        return out

    def has_rays(self) -> bool:
        return any(isinstance(k, Ray) for k in self._c)

    def is_nonnegative(self) -> bool:
        return all(c > 0 for c in self._c.values())

    def to_json(self) -> list[dict]:
        return sorted(({"label": k.text(), "coeff": c} for k, c in self._c.items()), key=lambda d: d["label"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, data: list[dict] | str, u: int | None = None) -> "GrothSum":
        if isinstance(data, str):
            data = json.loads(data)
        return cls((parse_label(d["label"], u), int(d["coeff"])) for d in data)

    def __repr__(self) -> str:
        if not self._c:
            return "0"
        return " + ".join(f"{c}*[{k.text()}]" for k, c in sorted(self._c.items(), key=lambda kv: kv[0].text()))


# ===========================================================================
# expansion identities
# ===========================================================================

def _gamma1(u: int, label: ModuleLabel) -> Lin:
    """gamma^1 of nabla^nab(mu); 3j moves by u under nabla, so this is affine."""
    return Lin(GammaCoset(gamma1_rep(u, label.mu)), tuple((v, GammaCoset(OMEGA2 * u).scale(s))
                                                         for v, s in label.nab.slopes))


def _gamma2(u: int, label: ModuleLabel) -> Lin:
    return _gamma1(u, label) - GammaCoset(ALPHA3 * Fraction(-u, 2))


def expand_semirelaxed(u: int, label: ModuleLabel, var: str) -> GrothSum:
    """Body of sigma^g w(S^lam_gamma) = sum_n (-1)^n sigma^{g + n w w3^} R^{nabla^n lam}_{w gamma - n u w w3/2}.

    The returned classes depend on `var`; the series sign is -1.
    """
    if label.kind != "S":
        raise ValueError("expected a semirelaxed class")
    w = label.w
    step_gamma = GammaCoset(w.act(OMEGA3) * Fraction(-u, 2))
    body = ModuleLabel(
        "R", label.mu,
        label.nab.add_slope(var, 1),
        label.g.add_slope(var, w.act_coweight(CW3)),
        IDENTITY,
        label.gamma.map(lambda x: x.weyl(w)).add_slope(var, step_gamma),
    )
    return GrothSum.single(body)


def expand_omega0(u: int, label: ModuleLabel, var: str) -> GrothSum:
    """Body (series sign +1) of the alternating expansion of sigma^g w L(lam - (u/2) w0)."""
    if label.kind != "L0":
        raise ValueError("expected an L0 class")
    w = label.w
    n_gamma = GammaCoset(OMEGA2 * u)
    flow_step = w.act_coweight(CW2 * -2)
    a = ModuleLabel(
        "S", label.mu, label.nab.add_slope(var, 1),
        (label.g + w.act_coweight(-CW2)).add_slope(var, flow_step),
        w * S1,
        _gamma1(u, label).add_slope(var, n_gamma),
    )
    b = ModuleLabel(
        "S", label.mu, (label.nab + 1).add_slope(var, 1),
        (label.g + w.act_coweight(CW3 - CW2)).add_slope(var, flow_step),
        w,
        (_gamma2(u, label) + n_gamma).add_slope(var, n_gamma),
    )
    return GrothSum([(a, 1), (b, -1)])


def expand_lambda1(u: int, label: ModuleLabel) -> GrothSum:
    """sigma^g w L(Lambda^1_lam) = sigma^g w s1(S^lam_{gamma^2}) - sigma^{g + w w3^} w L0(lam)."""
    if label.kind != "L1":
        raise ValueError("expected an L1 class")
    w = label.w
    semi = ModuleLabel("S", label.mu, label.nab, label.g, w * S1, _gamma2(u, label))
    hw = ModuleLabel("L0", label.mu, label.nab, label.g + w.act_coweight(CW3), w)
    return GrothSum([(semi, 1), (hw, -1)])


def expand_relaxed(u: int, label: ModuleLabel) -> GrothSum:
    """[R^lam_gamma] = [S^lam_gamma] + [sigma^{w3^} S^{nabla lam}_{gamma - u w3/2}] on the atypical locus."""
    if label.kind != "R" or not label.is_concrete:
        raise ValueError("expected a concrete relaxed class")
    gamma = label.gamma.const
    if not semirelaxed_condition(u, label.mu, gamma):
        raise ValueError("gamma violates <gamma, w3^> = -j - u/6 mod Z")
    g = label.g.const
    return GrothSum([
        (semirelaxed(label.mu, gamma, IDENTITY, g), 1),
        (semirelaxed(label.mu.nabla(1), gamma - OMEGA3 * Fraction(u, 2), IDENTITY, g + CW3), 1),
    ])


def expand_degenerate(u: int, label: ModuleLabel) -> GrothSum:
    """[S^lam_{gamma^i}] as two twisted highest-weight classes.

    [S^lam_{gamma^1}] = [w1 w2 L(Lambda^1)] + [w1 L(Lambda^2)],
    [S^lam_{gamma^2}] = [w1 w2 L(Lambda^2)] + [w1 L(Lambda^1)].
    """
    if label.kind != "S" or not label.is_concrete:
        raise ValueError("expected a concrete semirelaxed class")
    lam, gamma, g, w = label.mu, label.gamma.const, label.g.const, label.w
    if gamma == GammaCoset(gamma1_rep(u, lam)):
        first, second = hw_lambda1, hw_lambda2
    elif gamma == GammaCoset(gamma2_rep(u, lam)):
        first, second = hw_lambda2, hw_lambda1
    else:
        raise ValueError("gamma is neither gamma^1 nor gamma^2")
    out = GrothSum([(first(lam, S1 * S2), 1), (second(lam, S1), 1)])
    return out.twisted(w).flowed(g)


def groth_expand(u: int, label: ModuleLabel) -> GrothSum | "LazySeries":
    """One step of the expansion identities.

    Relaxed classes on the atypical locus split into two semirelaxed ones;
    semirelaxed classes at gamma^1/gamma^2 split into highest-weight ones;
    L(Lambda^1) becomes semirelaxed minus L0; other semirelaxed and L0 classes
    give lazy infinite series.
    """
    if label.kind == "R":
        return expand_relaxed(u, label)
    if label.kind == "L1":
        return expand_lambda1(u, label)
    if label.kind == "S":
        lam, gamma = label.mu, label.gamma.const
        if gamma in (GammaCoset(gamma1_rep(u, lam)), GammaCoset(gamma2_rep(u, lam))) and label.is_concrete:
            return expand_degenerate(u, label)
        _check_semi(u, label)
        return LazySeries(-1, expand_semirelaxed(u, label, Ray.BOUND))
    return LazySeries(1, expand_omega0(u, label, Ray.BOUND))


@dataclass(frozen=True)
class LazySeries:
    """sum_{n>=0} sign^n body(n), with body written in the bound index '#'."""

    sign: int
    body: GrothSum

    def term(self, n: int) -> GrothSum:
        return self.body.map(lambda x: x.subs(Ray.BOUND, n)).scale(self.sign ** n)

    def __iter__(self) -> Iterator[GrothSum]:
        for n in itertools.count():
            yield self.term(n)

    def partial(self, count: int) -> GrothSum:
        out = GrothSum()
        for n in range(count):
            out.add_sum(self.term(n))
        return out


def _check_semi(u: int, label: ModuleLabel) -> None:
    if label.is_concrete and not semirelaxed_condition(u, label.mu, label.gamma.const):
        raise ValueError(f"{label.text()} violates <gamma, w3^> = -j - u/6 mod Z")


# ===========================================================================
# ray collection
# ===========================================================================

def _canonical_shift(label: ModuleLabel, var: str) -> int:
    """k such that label(n) = c(n + k) with c(0) the canonical point of the line."""
    gv = label.g.slope(var)
    if gv.is_zero():
        raise TelescopingError(f"series over {var} has a stationary class {label.text()}")
    coords = [(abs(c), i, c) for i, c in enumerate((gv.g1, gv.g2)) if c]
    _, i, fv = min(coords)
    f0 = (label.g.const.g1, label.g.const.g2)[i]
    r = f0 % abs(fv)
    k = (f0 - r) / fv
    if Fraction(k).denominator != 1:
        raise TelescopingError("non-integral flow along a series")
    return int(k)


def collect(body: GrothSum, var: str, sign: int) -> GrothSum:
    """Rewrite sum_{n>=0} sign^n body(n) as finitely many classes plus canonical rays."""
    out = GrothSum()
    stationary = GrothSum()
    for key, coeff in body.items():
        if isinstance(key, Ray):
            if var in key.vars:
                raise UnsupportedFusion("nested series are not supported")
            stationary.add(key, coeff)
            continue
        if var not in key.vars:
            stationary.add(key, coeff)
            continue
        k = _canonical_shift(key, var)
        canon = key.shift(var, -k)
        pref = sign ** abs(k)
        out.add(Ray(sign, canon.rename(var, Ray.BOUND)), pref * coeff)
        if k >= 0:
            for i in range(k):
                out.add(canon.subs(var, i), -pref * sign ** i * coeff)
        else:
            for i in range(k, 0):
                out.add(canon.subs(var, i), pref * sign ** abs(i) * coeff)
    if len(stationary):
        raise TelescopingError(f"series over {var} has stationary terms {stationary}")
    return out


def ray_as_semirelaxed(u: int, ray: Ray) -> ModuleLabel | None:
    """Recognise an alternating relaxed ray as a semirelaxed class, if it is one."""
    lab = ray.label
    if ray.sign != -1 or lab.kind != "R":
        return None
    b = Ray.BOUND
    nab, gv, gam = lab.step(b)
    if nab != 1:
        return None
    for w in WEYL_GROUP:
        if gv == w.act_coweight(CW3) and gam == GammaCoset(w.act(OMEGA3) * Fraction(-u, 2)):
            start = lab.subs(b, 0)
            winv = w.inverse()
            semi = ModuleLabel("S", start.mu, start.nab, start.g, w, start.gamma.map(lambda x: x.weyl(winv)))
            _check_semi(u, semi)
            return semi
    return None


def identify_semirelaxed(u: int, expr: GrothSum) -> GrothSum:
    out = GrothSum()
    for key, c in expr.items():
        semi = ray_as_semirelaxed(u, key) if isinstance(key, Ray) else None
        out.add(semi if semi is not None else key, c)
    return out


def normal_form(u: int, expr: GrothSum) -> GrothSum:
    """Move every semirelaxed class and concrete ray to the canonical base point of its line.

    Equal elements built from relaxed and semirelaxed classes have equal normal
    forms.  Highest-weight classes are left untouched.
    """
    out = GrothSum()
    for key, c in expr.items():
        if isinstance(key, ModuleLabel) and key.kind == "S":
            var = "_nf"
            ray_form = collect(expand_semirelaxed(u, key, var), var, -1)
            out.add_sum(identify_semirelaxed(u, ray_form), c)
        elif isinstance(key, Ray) and not key.vars:
            # a twist or flow applied after collection can move the base point
            body = GrothSum.single(key.label.rename(Ray.BOUND, "_nf"))
            out.add_sum(identify_semirelaxed(u, collect(body, "_nf", key.sign)), c)
        else:
            out.add(key, c)
    return out


def series_form(u: int, expr: GrothSum) -> GrothSum:
    """Rewrite highest-weight classes as semirelaxed classes and rays, then normalise."""
    out = GrothSum()
    for key, c in expr.items():
        if isinstance(key, ModuleLabel) and key.kind == "L1":
            out.add_sum(series_form(u, expand_lambda1(u, key)), c)
        elif isinstance(key, ModuleLabel) and key.kind == "L0":
            var = "_sf"
            out.add_sum(collect(expand_omega0(u, key, var), var, 1), c)
        else:
            out.add(key, c)
    return normal_form(u, out)


# ===========================================================================
# closed-form Grothendieck fusion rules
# ===========================================================================

def _half(u: int, x: FiniteWeight) -> FiniteWeight:
    return x * Fraction(u, 2)


def _relaxed_product(u: int, a: ModuleLabel, b: ModuleLabel) -> GrothSum:
    """Product of two unflowed relaxed classes (which may depend on indices).

    Output BP labels are nabla^{a+b+e} of the nu with N_{mu_a mu_b}^nu != 0,
    using N^{nabla^{a+b} nu}_{nabla^a mu_a, nabla^b mu_b} = N^nu_{mu_a mu_b}.
    """
    nab = a.nab + b.nab
    gam = a.gamma + b.gamma
    terms = ((2, -1, CW0, ZERO),
             (1, 0, -CW1, _half(u, OMEGA1)),
             (1, 1, -CW2, _half(u, OMEGA2)),
             (1, 1, -CW3, _half(u, OMEGA3)),
             (1, 1, CW1, -_half(u, OMEGA1)),
             (1, 0, CW2, -_half(u, OMEGA2)),
             (1, 0, CW3, -_half(u, OMEGA3)))
    out = GrothSum()
    for nu, n in _bp_products(u, a.mu, b.mu):
        for mult, shift, g, off in terms:
            out.add(ModuleLabel("R", nu, nab + shift, Lin(g), IDENTITY, gam + GammaCoset(off)), mult * n)
    return out


def relaxed_fusion(u: int, a: ModuleLabel, b: ModuleLabel) -> GrothSum:
    """[sigma^g R] x [sigma^g' R'] by the closed relaxed rule, flows added."""
    if a.kind != "R" or b.kind != "R":
        raise ValueError("relaxed_fusion takes two relaxed classes")
    return _relaxed_product(u, a.unflowed(), b.unflowed()).flowed(a.g + b.g)


def _concrete(x: Lin):
    return x.value()


def _closed_rule(u: int, x: ModuleLabel, y: ModuleLabel) -> GrothSum | None:
    """The listed rules for unflowed classes in the standard orientation."""
    kx, ky = x.kind, y.kind
    if kx == "R" and ky == "R":
        return _relaxed_product(u, x, y)
    out = GrothSum()
    h = lambda v: _half(u, v)   # noqa: E731

    def add(kind, nu, shift, g, gamma=None, w=IDENTITY, coeff=1):
        gam = None if gamma is None else Lin(GammaCoset(gamma))
        out.add(ModuleLabel(kind, nu.nabla(shift), Lin(0), Lin(g), w, gam), coeff)

    lam, lamp = x.lam, y.lam
    prods = _bp_products(u, lam, lamp)
    gx = None if x.gamma is None else _concrete(x.gamma).rep
    gy = None if y.gamma is None else _concrete(y.gamma).rep
    t = OMEGA2 * (3 * bp_charge(lam))
    if kx == "S" and ky == "R":
        w = x.w
        base = w.act(gx) + gy
        for nu, n in prods:
            add("R", nu, -1, CW0, base, coeff=n)
            add("R", nu, 0, -w.act_coweight(CW1), base + h(w.act(OMEGA1)), coeff=n)
            add("R", nu, 0, w.act_coweight(CW2), base - h(w.act(OMEGA2)), coeff=n)
            add("R", nu, 1, -w.act_coweight(CW3), base + h(w.act(OMEGA3)), coeff=n)
        return out
    if kx == "S" and ky == "S" and x.w == IDENTITY and y.w == IDENTITY:
        base = gx + gy
        for nu, n in prods:
            add("S", nu, 0, -CW1, base + h(OMEGA1), coeff=n)
            add("S", nu, 0, CW2, base - h(OMEGA2), coeff=n)
            add("R", nu, 1, -CW3, base + h(OMEGA3), coeff=n)
        return out
    if kx == "S" and ky == "S" and x.w == S1 and y.w == IDENTITY:
        base = S1.act(gx) + gy
        for nu, n in prods:
            add("R", nu, -1, CW0, base, coeff=n)
            add("R", nu, 0, CW2, base - h(OMEGA2), coeff=n)
        return out
    if kx == "L0" and x.w == IDENTITY:
        if ky == "R":
            for nu, n in prods:
                add("R", nu, 0, CW0, t + gy, coeff=n)
            return out
        if ky == "S":
            for nu, n in prods:
                add("S", nu, 0, CW0, t + gy, w=y.w, coeff=n)
            return out
        if ky == "L0" and y.w == IDENTITY:
            for nu, n in prods:
                add("L0", nu, 0, CW0, coeff=n)
            return out
        if ky == "L1" and y.w == IDENTITY:
            for nu, n in prods:
                add("L1", nu, 0, CW0, coeff=n)
            return out
        return None
    if kx == "L1" and x.w == IDENTITY:
        if ky == "R":
            base = t + gy
            for nu, n in prods:
                add("R", nu, -1, CW0, base + h(OMEGA3), coeff=n)
                add("R", nu, 1, CW1, base - h(OMEGA2), coeff=n)
                add("R", nu, 0, CW2, base - h(ALPHA2), coeff=n)
            return out
        if ky == "S" and y.w == IDENTITY:
            base = t + gy
            for nu, n in prods:
                add("S", nu, -1, CW0, base + h(OMEGA3), coeff=n)
                add("R", nu, 0, CW2, base - h(ALPHA2), coeff=n)
            return out
        if ky == "S" and y.w == S1:
            for nu, n in prods:
                add("R", nu, 1, CW1, t + S1.act(gy) - h(OMEGA2), coeff=n)
                add("S", nu, 0, CW2, t + gy - h(ALPHA3), w=S1, coeff=n)
            return out
        if ky == "L1" and y.w == IDENTITY:
            for nu, n in prods:
                add("L0", nu, 1, CW0, coeff=n)
                add("L0", nu, -1, CW1 * 2, coeff=n)
                add("L0", nu, 0, CW2 * 2, coeff=n)
                # c(L(Lambda^1_{d nu})) = s3 L(Lambda^1_{nabla^-1 nu})
                add("L1", nu, -1, COROOT3, w=S3, coeff=2 * n)
            return out
    return None


def _closed_unflowed(u: int, a: ModuleLabel, b: ModuleLabel) -> GrothSum | None:
    for x, y in ((a, b), (b, a)):
        # the vacuum is the unit; a Weyl twist of it is not
        if x.kind == "L0" and x.w == IDENTITY and x.mu == vacuum(u):
            return GrothSum.single(y)
    for x, y in ((a, b), (b, a)):
        for v in WEYL_GROUP:
            vinv = v.inverse()
            res = _closed_rule(u, x.twisted(vinv), y.twisted(vinv))
            if res is not None:
                return res.twisted(v)
    return None


# ===========================================================================
# derived products: expansion, relaxed rule, re-collection
# ===========================================================================

class _Deriver:
    """Expands non-relaxed factors and re-collects; only the relaxed rule is assumed."""

    def __init__(self, u: int):
        self.u = u
        self._names = itertools.count(1)

    def fresh(self) -> str:
        return f"n{next(self._names)}"

    def fuse(self, a: ModuleLabel, b: ModuleLabel) -> GrothSum:
        return self._fuse_unflowed(a.unflowed(), b.unflowed()).flowed(a.g + b.g)

    def _fuse_body(self, body: GrothSum, other: ModuleLabel, left: bool) -> GrothSum:
        out = GrothSum()
        for key, c in body.items():
            out.add_sum(self.fuse(key, other) if left else self.fuse(other, key), c)
        return out

    def _fuse_unflowed(self, a: ModuleLabel, b: ModuleLabel) -> GrothSum:
        u = self.u
        kinds = (a.kind, b.kind)
        if a.kind == "L1":
            return self._fuse_body(expand_lambda1(u, a), b, True)
        if b.kind == "L1":
            return self._fuse_body(expand_lambda1(u, b), a, False)
        if kinds == ("R", "R"):
            return _relaxed_product(u, a, b)
        if set(kinds) == {"L0", "R"}:
            hw, rel = (a, b) if a.kind == "L0" else (b, a)
            var = self.fresh()
            body = self._fuse_body(expand_omega0(u, hw, var), rel, True)
            return identify_semirelaxed(u, collect(body, var, 1))
        if "S" in kinds:
            semi, other = (a, b) if a.kind == "S" else (b, a)
            var = self.fresh()
            body = self._fuse_body(expand_semirelaxed(u, semi, var), other, True)
            return identify_semirelaxed(u, collect(body, var, -1))
        if kinds == ("L0", "L0"):
            var = self.fresh()
            body = self._fuse_body(expand_omega0(u, b, var), a, False)
            return collect(body, var, 1)
        raise UnsupportedFusion(f"no derivation for {a.kind} x {b.kind}")


def derive_fusion(u: int, a: ModuleLabel, b: ModuleLabel) -> GrothSum:
    """Product obtained from the relaxed rule alone, by expansion and telescoping."""
    return _Deriver(u).fuse(a, b)


FUSE_METHODS = ("closed", "derived", "auto")


def groth_fuse(u: int, a: ModuleLabel, b: ModuleLabel, method: str = "auto") -> GrothSum:
    """Grothendieck product of two classes.

    'closed' uses the listed rules after normalising flows (additive) and Weyl
    twists (equivariant); 'derived' rebuilds the product from the relaxed rule;
    'auto' tries the closed rules and falls back to the derivation.
    """
    if method not in FUSE_METHODS:
        raise ValueError(f"unknown method {method!r}")
    for x in (a, b):
        if not x.is_concrete:
            raise ValueError("groth_fuse takes concrete classes")
        if x.kind == "S":
            _check_semi(u, x)
        if x.mu not in enumerate_P(u):
            raise ValueError(f"{x.mu.text()} is not in P^{u - 3}")
    if method in ("closed", "auto"):
        res = _closed_unflowed(u, a.unflowed(), b.unflowed())
        if res is not None:
            res = res.flowed(a.g + b.g)
            if not res.is_nonnegative():
                raise InvariantViolation(f"negative multiplicity in {res}")
            return res
        if method == "closed":
            raise UnsupportedFusion(f"no closed rule for {a.text()} x {b.text()}")
    return derive_fusion(u, a, b)


# ===========================================================================
# kernels of classes, used as an independent fingerprint
# ===========================================================================

def _term_kernel(u: int, lab: ModuleLabel, col: RelaxedLabel) -> CycNum:
    g = lab.g.value()
    lam = lab.lam
    if lab.kind == "R":
        return relaxed_skernel(u, RelaxedLabel(g, lam, lab.gamma.value()), col).exact
    if lab.kind == "S":
        return semirelaxed_skernel(u, lab.w, RelaxedLabel(g, lam, lab.gamma.value()), col).exact
    # K_{sigma^g w L}(col) = K_{sigma^{w^-1 g} L}(w^-1 col)
    winv = lab.w.inverse()
    col2 = RelaxedLabel(winv.act_coweight(col.g), col.lam, col.gamma.weyl(winv))
    variant = "omega0" if lab.kind == "L0" else "Lambda1"
    return hw_skernel(u, variant, winv.act_coweight(g), lam, col2).exact


def class_kernel(u: int, key: Key, col: RelaxedLabel) -> CycNum:
    """S-kernel of a class or ray against a relaxed column, exactly.

    A ray's terms form a geometric sequence; it is summed as K0 / (1 - s r).
    """
    if isinstance(key, ModuleLabel):
        return _term_kernel(u, key, col)
    k0, k1, k2 = (_term_kernel(u, key.term(n), col) for n in range(3))
    k0, k1, k2 = lift_common(k0, k1, k2)
    if k0.is_zero():
        raise PoleError("ray kernel vanishes at this column")
    r = k1 / k0
    if k2 != k1 * r:
        raise InvariantViolation(f"ray {key.text()} is not geometric")
    den = 1 - r * key.sign
    if den.is_zero():
        raise PoleError("ray resummation is singular at this column")
    return k0 / den


def kernel_of(u: int, expr: GrothSum, col: RelaxedLabel) -> CycNum:
    vals = [class_kernel(u, k, col).scale(c) for k, c in expr.items()]
    if not vals:
        return CycNum.zero(1)
    vals = lift_common(*vals)
    total = vals[0]
    for v in vals[1:]:
        total = total + v
    return total


def random_column(u: int, rng: random.Random, den: int | None = None) -> RelaxedLabel:
    """A random relaxed column; gamma on the 1/(12u) grid keeps kernels in Q(xi_{12u})."""
    den = 12 * u if den is None else den
    g = Coweight(rng.randint(-2, 2), rng.randint(-2, 2))
    lam = rng.choice(enumerate_P(u))
    gamma = GammaCoset.from_root_coords(Fraction(rng.randrange(den), den), Fraction(rng.randrange(den), den))
    return RelaxedLabel(g, lam, gamma)


def same_kernels(u: int, left: GrothSum, right: GrothSum, rng: random.Random, columns: int = 4) -> bool:
    """Compare kernels at random columns; poles are skipped and resampled."""
    done = tries = 0
    while done < columns:
        tries += 1
        if tries > 50 * columns:
            raise RuntimeError("could not find regular columns")
        col = random_column(u, rng)
        try:
            a = kernel_of(u, left, col)
            b = kernel_of(u, right, col)
        except PoleError:
            continue
        a, b = lift_common(a, b)
        if a != b:
            return False
        done += 1
    return True


# ===========================================================================
# the standard Verlinde reduction
# ===========================================================================

class ReductionError(ArithmeticError):
    """The Verlinde reduction left a residual phase, coupling or coefficient."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True)
class ExpTerm:
    """coeff * e(phase + m j_L + <h, Gamma> + <x, G>), e(t) = exp(2 pi i t).

    phase is affine in the series index: phase[0] + n phase[1].
    """

    coeff: int
    phase: tuple[Fraction, Fraction]
    m: Lin
    h: Lin
    x: Lin

    def __post_init__(self):
        # phases only matter mod 1; m only mod 3 since 3 j_L is an integer
        object.__setattr__(self, "phase", tuple(Fraction(p) - math.floor(p) for p in self.phase))

    def key(self):
        return (self.phase, self.m, self.h, self.x)

    def __mul__(self, other: "ExpTerm") -> "ExpTerm":
        return ExpTerm(self.coeff * other.coeff,
                       (self.phase[0] + other.phase[0], self.phase[1] + other.phase[1]),
                       self.m + other.m, self.h + other.h, self.x + other.x)


class ExpPoly:
    """A finite sum of ExpTerms with merged keys."""

    def __init__(self, terms: Iterable[ExpTerm] = ()):
        acc: dict = {}
        for t in terms:
            k = t.key()
            acc[k] = acc.get(k, 0) + t.coeff
        self.terms = tuple(ExpTerm(c, *k) for k, c in acc.items() if c)

    def __mul__(self, other: "ExpPoly") -> "ExpPoly":
        return ExpPoly(a * b for a in self.terms for b in other.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def evaluate(self, gamma: FiniteWeight, j: Fraction, coweight: Coweight) -> complex:
        """Numeric value at (Gamma, j_L, G) for index-free polynomials."""
        total = 0j
        for t in self.terms:
            arg = (t.phase[0] + t.m.value() * j + t.h.value().pair(gamma)
                   + coweight.pair(t.x.value().rep))
            total += t.coeff * cmath.exp(2j * math.pi * float(arg))
        return total


def _one_term(coeff=1, phase=(Fraction(0), Fraction(0)), m=0, h=CW0, x=ZERO) -> ExpTerm:
    return ExpTerm(coeff, phase, Lin.of(m), Lin.of(h), Lin.of(GammaCoset(x)) if isinstance(x, FiniteWeight) else x)


def _factor_poly(h: Coweight, m: int, c: Fraction) -> ExpPoly:
    """1 + e(<h, Gamma> + m j + c)."""
    return ExpPoly([_one_term(), _one_term(1, (c, Fraction(0)), m, h)])


def vacuum_inverse_poly(u: int) -> ExpPoly:
    """Denominator product of the vacuum kernel, as an 8-term polynomial before merging."""
    third = Fraction(u, 3)
    poly = ExpPoly([_one_term()])
    for h, m, c in ((CW1, -1, third), (CW2, 1, -third), (-CW3, -1, third)):
        poly = poly * _factor_poly(h, m, c)
    return poly


def _row_term(u: int, g: Lin, gamma: Lin, sign: int) -> ExpTerm:
    """e(-sign (<g,G> u/2 + <gamma,G> + <g,Gamma>)): a relaxed numerator (sign=1) or its inverse."""
    x = gamma + g.map(lambda c: GammaCoset(c.weight() * Fraction(u, 2)))
    return ExpTerm(1, (Fraction(0), Fraction(0)), Lin(0), g.scale(-sign), x.scale(-sign))


def standard_verlinde_reduce(u: int, row_a: ModuleLabel, row_b: ModuleLabel) -> GrothSum:
    """Reduce the Verlinde integral for two rows to a sum of classes.

    Rows may be relaxed, semirelaxed, or the unflowed vacuum class.  Steps:
    the vacuum denominators become an ExpPoly; a semirelaxed denominator is
    expanded geometrically in a series index; the Gamma integral fixes the
    outgoing flow; the coweight sum fixes the outgoing gamma mod Q; nabla
    shifts absorb the remaining e(m j_L) factors before the BP fusion sum.
    """
    rows = [row_a, row_b]
    vac = vacuum(u)
    for r in rows:
        if not r.is_concrete:
            raise ValueError("rows must be concrete")
    is_vac = [r.kind == "L0" and r.w == IDENTITY and r.mu == vac and r.g.const.is_zero() for r in rows]
    for r, v in zip(rows, is_vac):
        if r.kind == "L1" or (r.kind == "L0" and not v):
            raise UnsupportedFusion("only the unflowed vacuum highest-weight row is supported")
    if all(is_vac):
        return GrothSum.single(row_a)
    if any(is_vac):
        # S_vac / S_vac = 1: the integrand is S_B conj(S_C), whose integral is delta_{B,C}
        return GrothSum.single(rows[1] if is_vac[0] else rows[0])
    return _reduce(u, rows, row_a.lam, row_b.lam)


def _reduce(u: int, rows: list[ModuleLabel], lam_a: AffineWeight, lam_b: AffineWeight) -> GrothSum:
    var = "n"
    series_sign = 1
    poly = ExpPoly([_one_term()])
    if sum(r.kind == "S" for r in rows) > 1:
        raise UnsupportedFusion("two semirelaxed rows need a double series")
    for r in rows:
        gamma = r.gamma if r.kind == "R" else r.gamma.map(lambda x: x.weyl(r.w))
        poly = poly * ExpPoly([_row_term(u, r.g, gamma, 1)])
        if r.kind == "S":
            # 1/(1 + e(a)) = sum_n (-1)^n e(n a),  a = <-w w3^, Gamma> - j + u/3
            series_sign = -1
            step = ExpTerm(1, (Fraction(0), Fraction(u, 3)), Lin(0, ((var, -1),)),
                           Lin(CW0, ((var, -r.w.act_coweight(CW3)),)), Lin(GammaCoset(ZERO)))
            poly = poly * ExpPoly([step])
    vac_row = _row_term(u, Lin(-CW2), Lin(GammaCoset(gamma1_rep(u, vacuum(u)))), -1)
    poly = poly * ExpPoly([vac_row]) * vacuum_inverse_poly(u)
    products = _bp_products(u, lam_a, lam_b)
    out = GrothSum()
    for t in poly.terms:
        # Gamma integral: <h + g'', Gamma> must vanish
        g_out = -t.h
        # coweight sum: x + (u/2) g'' + gamma'' must lie in Q
        gamma_out = -(t.x + g_out.map(lambda c: GammaCoset(c.weight() * Fraction(u, 2))))
        # e(m j_L) conj(S_{lam'' L}) = e(m u/3) conj(S_{nabla^m lam'', L})
        resid = (t.phase[0] + Fraction(t.m.const * u, 3), t.phase[1] + Fraction(t.m.slope(var) * u, 3))
        if resid[0].denominator != 1 or resid[1].denominator != 1:
            raise ReductionError("residual phase is not 1", term=t, residual=resid)
        for nu, n in products:
            out.add(ModuleLabel("R", nu, -t.m, g_out, IDENTITY, gamma_out), t.coeff * n)
    if var in out.vars:
        out = identify_semirelaxed(u, collect(out, var, series_sign))
    for k, c in out.items():
        if c < 0:
            raise ReductionError("negative coefficient", label=k.text(), coeff=c)
    return out
