"""Exact arithmetic in the cyclotomic field Q(xi_N), xi_N = exp(2 pi i / N).

Elements are stored in the power basis 1, xi, ..., xi^(phi(N)-1), i.e. reduced
modulo the N-th cyclotomic polynomial.  Coefficients are kept as a tuple of
integer numerators over one positive common denominator, which keeps the hot
paths (products and long dot products) in plain integer arithmetic.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction]

__all__ = [
    "CycNum",
    "Phase",
    "cyclotomic_polynomial",
    "root_of_unity",
    "canonicalize",
    "to_complex",
    "lift_common",
    "cyc_dot",
]


def _divisors(n: int) -> list[int]:
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d * d != n:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def _poly_exact_div(num: list[int], den: Sequence[int]) -> list[int]:
    """Quotient of integer polynomials (low degree first); den must be monic."""
    num = list(num)
    dd = len(den) - 1
    if den[dd] != 1:
        raise ValueError("divisor must be monic")
    quot = [0] * (len(num) - dd)
    for i in range(len(num) - 1, dd - 1, -1):
        c = num[i]
        if c:
            quot[i - dd] = c
            for j, b in enumerate(den):
                if b:
                    num[i - dd + j] -= c * b
    if any(num[:dd]):
        raise ArithmeticError("polynomial division is not exact")
    return quot


@lru_cache(maxsize=None)
def cyclotomic_polynomial(n: int) -> tuple[int, ...]:
    """Coefficients of Phi_n, constant term first.

    Uses x^n - 1 = prod_{d | n} Phi_d and divides out the proper divisors.
    """
    if n < 1:
        raise ValueError("n must be positive")
    poly = [-1] + [0] * (n - 1) + [1]
    for d in _divisors(n):
        if d < n:
            poly = _poly_exact_div(poly, cyclotomic_polynomial(d))
    return tuple(poly)


class _Field:
    """Per-order tables: Phi_N, phi(N), reductions of xi^k and float roots."""

    def __init__(self, order: int):
        self.order = order
        self.poly = cyclotomic_polynomial(order)
        self.degree = len(self.poly) - 1
        phi = self.degree
        # red[k] = coefficient vector of xi^k in the power basis, 0 <= k < N
        red: list[tuple[int, ...]] = []
        vec = [0] * phi
        vec[0] = 1
        for k in range(order):
            red.append(tuple(vec))
            top = vec[-1]
            vec = [0] + vec[:-1]
            if top:
                for i in range(phi):
                    vec[i] -= top * self.poly[i]
        self.red = red
        # sparse form of the tail rows, used when folding long vectors
        self.red_sparse = [tuple((i, c) for i, c in enumerate(r) if c) for r in red]
        self.roots = [cmath.exp(2j * math.pi * k / order) for k in range(order)]

    def reduce(self, dense: Sequence[int]) -> list[int]:
        """Reduce an integer vector indexed by powers of xi (any length)."""
        n, phi = self.order, self.degree
        if len(dense) > n:
            folded = [0] * n
            for k, c in enumerate(dense):
                if c:
                    folded[k % n] += c
            dense = folded
        out = list(dense[:phi])
        if len(out) < phi:
            out.extend([0] * (phi - len(out)))
        red_sparse = self.red_sparse
        for k in range(phi, len(dense)):
            c = dense[k]
            if c:
                for i, r in red_sparse[k]:
                    out[i] += c * r
        return out


@lru_cache(maxsize=None)
def _field(order: int) -> _Field:
    if order < 1:
        raise ValueError("order must be positive")
    return _Field(order)


def _normalise(nums: list[int], den: int) -> tuple[tuple[int, ...], int]:
    if den == 0:
        raise ZeroDivisionError("zero denominator")
    if den < 0:
        nums = [-c for c in nums]
        den = -den
    g = den
    for c in nums:
        if c:
            g = math.gcd(g, c)
            if g == 1:
                break
    if g != 1:
        nums = [c // g for c in nums]
        den //= g
    if not any(nums):
        den = 1
    return tuple(nums), den


def _pack(vec: Sequence[int], bits: int) -> int:
    acc = 0
    for c in reversed(vec):
        acc = (acc << bits) + c
    return acc


def _unpack(value: int, bits: int, length: int) -> list[int]:
    mask = (1 << bits) - 1
    half = 1 << (bits - 1)
    full = 1 << bits
    out = []
    for _ in range(length):
        d = value & mask
        value >>= bits
        if d >= half:
            d -= full
            value += 1
        out.append(d)
    if value != 0:
        raise ArithmeticError("packed product overflowed its digit width")
    return out


class CycNum:
    """An element of Q(xi_N) in canonical (power-basis) form."""

    __slots__ = ("order", "_num", "_den", "_hash")

    def __init__(self, order: int, coeffs: Iterable[Rational] = ()):
        fld = _field(order)
        coeffs = [Fraction(c) for c in coeffs]
        den = 1
        for c in coeffs:
            den = den * c.denominator // math.gcd(den, c.denominator)
        ints = [int(c * den) for c in coeffs]
        nums, den = _normalise(fld.reduce(ints), den)
        self._set(order, nums, den)

    def _set(self, order: int, nums: tuple[int, ...], den: int) -> None:
        self.order = order
        self._num = nums
        self._den = den
        self._hash = None

    @classmethod
    def _raw(cls, order: int, nums: Sequence[int], den: int = 1) -> "CycNum":
        """Build from an already reduced integer vector of length phi(N)."""
        obj = cls.__new__(cls)
        n, d = _normalise(list(nums), den)
        obj._set(order, n, d)
        return obj

    @classmethod
    def _from_dense(cls, order: int, dense: Sequence[int], den: int = 1) -> "CycNum":
        return cls._raw(order, _field(order).reduce(dense), den)

    # constructors -----------------------------------------------------------
    @classmethod
    def zero(cls, order: int) -> "CycNum":
        return cls._raw(order, [0] * _field(order).degree)

    @classmethod
    def one(cls, order: int) -> "CycNum":
        return cls.from_rational(order, 1)

    @classmethod
    def from_rational(cls, order: int, value: Rational) -> "CycNum":
        value = Fraction(value)
        vec = [0] * _field(order).degree
        vec[0] = value.numerator
        return cls._raw(order, vec, value.denominator)

    @classmethod
    def root_of_unity(cls, order: int, k: int) -> "CycNum":
        fld = _field(order)
        return cls._raw(order, fld.red[k % order])

    # inspection -------------------------------------------------------------
    @property
    def degree(self) -> int:
        return len(self._num)

    @property
    def coeffs(self) -> tuple[Fraction, ...]:
        """Canonical coefficient vector of length N (zeros past phi(N))."""
        vals = [Fraction(c, self._den) for c in self._num]
        return tuple(vals + [Fraction(0)] * (self.order - len(vals)))

    def is_zero(self) -> bool:
        return not any(self._num)

    def is_rational(self) -> bool:
        return not any(self._num[1:])

    def as_rational(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is not rational")
        return Fraction(self._num[0], self._den)

    def to_complex(self) -> complex:
        roots = _field(self.order).roots
        re = im = 0.0
        den = self._den
        for k, c in enumerate(self._num):
            if c:
                v = c / den
                r = roots[k]
                re += v * r.real
                im += v * r.imag
        return complex(re, im)

    # ring structure -----------------------------------------------------------
    def _check(self, other: "CycNum") -> None:
        if other.order != self.order:
            raise ValueError(
                f"cyclotomic orders differ ({self.order} vs {other.order}); lift first"
            )

    def _coerce(self, other) -> "CycNum":
        if isinstance(other, CycNum):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction)):
            return CycNum.from_rational(self.order, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        a, da = self._num, self._den
        b, db = other._num, other._den
        if da == db:
            return CycNum._raw(self.order, [x + y for x, y in zip(a, b)], da)
        return CycNum._raw(self.order, [x * db + y * da for x, y in zip(a, b)], da * db)

    __radd__ = __add__

    def __neg__(self) -> "CycNum":
        return CycNum._raw(self.order, [-x for x in self._num], self._den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other + (-self)

    def scale(self, r: Rational) -> "CycNum":
        r = Fraction(r)
        return CycNum._raw(self.order, [x * r.numerator for x in self._num], self._den * r.denominator)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, CycNum):
            return NotImplemented
        self._check(other)
        prod = _poly_mul(self._num, other._num)
        return CycNum._from_dense(self.order, prod, self._den * other._den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(1 / Fraction(other))
        if isinstance(other, CycNum):
            return self * other.inverse()
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.inverse().scale(other)
        return NotImplemented

    def __pow__(self, k: int) -> "CycNum":
        if k < 0:
            return self.inverse() ** (-k)
        result = CycNum.one(self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def _apply_exponent_map(self, mult: int) -> "CycNum":
        n = self.order
        dense = [0] * n
        for k, c in enumerate(self._num):
            if c:
                dense[(k * mult) % n] += c
        return CycNum._from_dense(n, dense, self._den)

    def conj(self) -> "CycNum":
        """Complex conjugation xi^k -> xi^{-k}."""
        return self._apply_exponent_map(-1)

    def galois(self, a: int) -> "CycNum":
        """The field automorphism xi -> xi^a (a coprime to the order)."""
        if math.gcd(a, self.order) != 1:
            raise ValueError(f"{a} is not a unit modulo {self.order}")
        return self._apply_exponent_map(a)

    def lift(self, order: int) -> "CycNum":
        """Re-express in Q(xi_M) for a multiple M of the current order."""
        if order % self.order:
            raise ValueError(f"{order} is not a multiple of {self.order}")
        step = order // self.order
        dense = [0] * order
        for k, c in enumerate(self._num):
            if c:
                dense[k * step] = c
        return CycNum._from_dense(order, dense, self._den)

    def inverse(self) -> "CycNum":
        """Multiplicative inverse, by solving a linear system over Q."""
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero")
        fld = _field(self.order)
        phi = fld.degree
        cols = []
        for j in range(phi):
            cols.append(fld.reduce(_poly_mul(self._num, fld.red[j])))
        # matrix rows i, columns j; solve M y = den * e0
        mat = [[Fraction(cols[j][i]) for j in range(phi)] + [Fraction(self._den if i == 0 else 0)]
               for i in range(phi)]
        sol = _solve(mat, phi)
        den = 1
        for c in sol:
            den = den * c.denominator // math.gcd(den, c.denominator)
        return CycNum._raw(self.order, [int(c * den) for c in sol], den)

    # comparison -----------------------------------------------------------------
    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            return self.is_rational() and self.as_rational() == other
        if not isinstance(other, CycNum):
            return NotImplemented
        return self.order == other.order and self._den == other._den and self._num == other._num

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.order, self._num, self._den))
        return self._hash

    def __repr__(self) -> str:
        return f"CycNum({self.order}, {self})"

    def __str__(self) -> str:
        parts = []
        for k, c in enumerate(self._num):
            if not c:
                continue
            coeff = Fraction(c, self._den)
            parts.append(f"{coeff}" if k == 0 else f"{coeff}*z^{k}")
        return " + ".join(parts) if parts else "0"


def _poly_mul(a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Integer polynomial product through Kronecker substitution."""
    ma = max((abs(x) for x in a), default=0)
    mb = max((abs(x) for x in b), default=0)
    if ma == 0 or mb == 0:
        return [0] * (len(a) + len(b) - 1)
    bits = ma.bit_length() + mb.bit_length() + max(len(a), len(b)).bit_length() + 2
    return _unpack(_pack(a, bits) * _pack(b, bits), bits, len(a) + len(b) - 1)


def _solve(mat: list[list[Fraction]], n: int) -> list[Fraction]:
    """Gauss-Jordan elimination on an augmented n x (n+1) matrix."""
    for col in range(n):
        piv = next((r for r in range(col, n) if mat[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular system")
        mat[col], mat[piv] = mat[piv], mat[col]
        p = mat[col][col]
        row = [x / p for x in mat[col]]
        mat[col] = row
        for r in range(n):
            if r != col and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [x - f * y for x, y in zip(mat[r], row)]
    return [mat[i][n] for i in range(n)]


def cyc_dot(xs: Sequence[CycNum], ys: Sequence[CycNum]) -> CycNum:
    """Sum of products x_i * y_i, reduced once at the end.

    All entries must share one order.  The products are accumulated as packed
    integers, so long sums cost little more than a single reduction.
    """
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    if not xs:
        raise ValueError("empty dot product")
    order = xs[0].order
    for v in list(xs) + list(ys):
        if v.order != order:
            raise ValueError("cyclotomic orders differ; lift first")
    dx = 1
    for x in xs:
        dx = dx * x._den // math.gcd(dx, x._den)
    dy = 1
    for y in ys:
        dy = dy * y._den // math.gcd(dy, y._den)
    ax = [[c * (dx // x._den) for c in x._num] for x in xs]
    ay = [[c * (dy // y._den) for c in y._num] for y in ys]
    ma = max((abs(c) for v in ax for c in v), default=0)
    mb = max((abs(c) for v in ay for c in v), default=0)
    phi = _field(order).degree
    if ma == 0 or mb == 0:
        return CycNum.zero(order)
    bits = ma.bit_length() + mb.bit_length() + (phi * len(xs)).bit_length() + 2
    total = 0
    for vx, vy in zip(ax, ay):
        total += _pack(vx, bits) * _pack(vy, bits)
    dense = _unpack(total, bits, 2 * phi - 1)
    return CycNum._from_dense(order, dense, dx * dy)


def root_of_unity(N: int, k: int) -> CycNum:
    """xi_N^k in canonical form."""
    return CycNum.root_of_unity(N, k)


def canonicalize(x: CycNum) -> CycNum:
    """Canonical representative; every CycNum is already canonical, so this
    re-reduces the coefficient vector and returns an equal value."""
    return CycNum(x.order, x.coeffs)


def to_complex(x: CycNum) -> complex:
    return x.to_complex()


def lift_common(*xs: CycNum) -> list[CycNum]:
    """Lift all arguments to the lcm of their orders."""
    order = 1
    for x in xs:
        order = math.lcm(order, x.order)
    return [x.lift(order) if x.order != order else x for x in xs]


@dataclass(frozen=True)
class Phase:
    """The unit complex number exp(2 pi i r), with r kept modulo 1."""

    value: Fraction

    def __post_init__(self):
        v = Fraction(self.value)
        object.__setattr__(self, "value", v - math.floor(v))

    def __mul__(self, other: "Phase") -> "Phase":
        if not isinstance(other, Phase):
            return NotImplemented
        return Phase(self.value + other.value)

    def __truediv__(self, other: "Phase") -> "Phase":
        if not isinstance(other, Phase):
            return NotImplemented
        return Phase(self.value - other.value)

    def __pow__(self, n: int) -> "Phase":
        return Phase(self.value * n)

    def inverse(self) -> "Phase":
        return Phase(-self.value)

    conj = inverse

    def is_one(self) -> bool:
        return self.value == 0

    @property
    def denominator(self) -> int:
        return self.value.denominator

    def to_cyc(self, order: int | None = None) -> CycNum:
        """Embed into Q(xi_M), M = lcm(order, denominator of r)."""
        m = self.value.denominator if order is None else math.lcm(order, self.value.denominator)
        return CycNum.root_of_unity(m, int(self.value * m))

    def to_complex(self) -> complex:
        return cmath.exp(2j * math.pi * float(self.value))

    def __repr__(self) -> str:
        return f"Phase({self.value})"
