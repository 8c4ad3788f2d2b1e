"""Exact arithmetic in Q(r) for an algebraic number r in (0, 1).

The field is described by an integer minimal polynomial together with a
rational interval isolating the designated real root.  All arithmetic is
carried out on rational coefficient vectors reduced modulo the minimal
polynomial; signs are decided by exact interval refinement, never by
floating point.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from math import gcd
from typing import Iterable, Sequence


class NumberFieldError(Exception):
    pass


class NoRootInInterval(NumberFieldError):
    pass


class MultipleRootsInInterval(NumberFieldError):
    pass


class DegenerateInterval(NumberFieldError):
    pass


class NotSelmerField(NumberFieldError):
    pass


# ---------------------------------------------------------------------------
# dense polynomial helpers (coefficients low degree first)

def _trim(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    c = list(coeffs)
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def poly_eval(coeffs: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def poly_deriv(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    return _trim([Fraction(i) * coeffs[i] for i in range(1, len(coeffs))])


def poly_neg_rem(a: Sequence[Fraction], b: Sequence[Fraction]) -> tuple[Fraction, ...]:
    """-(a mod b), the iteration step of a Sturm chain."""
    a = list(a)
    db, lb = len(b) - 1, b[-1]
    while len(a) - 1 >= db and _trim(a):
        da = len(a) - 1
        f = a[-1] / lb
        for i in range(db + 1):
            a[da - db + i] -= f * b[i]
        a = list(_trim(a))
        if not a:
            break
    return tuple(-c for c in a)


def sturm_chain(coeffs: Sequence[Fraction]) -> list[tuple[Fraction, ...]]:
    chain = [_trim(coeffs), poly_deriv(coeffs)]
    while chain[-1]:
        nxt = poly_neg_rem(chain[-2], chain[-1])
        if not nxt:
            break
        chain.append(nxt)
    return [p for p in chain if p]


def _sign_variations(chain: list[tuple[Fraction, ...]], x: Fraction) -> int:
    signs = []
    for p in chain:
        v = poly_eval(p, x)
        if v != 0:
            signs.append(1 if v > 0 else -1)
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def count_real_roots(coeffs: Sequence[Fraction], lo: Fraction, hi: Fraction) -> int:
    """Number of distinct real roots in (lo, hi], endpoints assumed non-roots."""
    chain = sturm_chain(coeffs)
    return _sign_variations(chain, lo) - _sign_variations(chain, hi)


_TERM_RE = re.compile(
    r"""(?P<sign>[+-]?)\s*
        (?:(?P<coef>\d+)\s*\*?\s*)?
        (?:(?P<var>[a-zA-Z])\s*(?:\^\s*(?P<exp>\d+))?)?
        \s*""",
    re.VERBOSE,
)


def parse_polynomial(text: str) -> tuple[int, ...]:
    """Parse an integer-coefficient polynomial like "x^4+x-1".

    Returns coefficients low degree first.
    """
    s = text.replace(" ", "").replace("**", "^")
    if not s:
        raise ValueError("empty polynomial")
    coeffs: dict[int, int] = {}
    pos = 0
    first = True
    while pos < len(s):
        m = _TERM_RE.match(s, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse polynomial {text!r} at {s[pos:]!r}")
        sign, coef, var, exp = m.group("sign", "coef", "var", "exp")
        if not sign and not first:
            raise ValueError(f"missing sign in {text!r}")
        if coef is None and var is None:
            raise ValueError(f"empty term in {text!r}")
        k = 0 if var is None else (1 if exp is None else int(exp))
        c = 1 if coef is None else int(coef)
        if sign == "-":
            c = -c
        coeffs[k] = coeffs.get(k, 0) + c
        pos = m.end()
        first = False
    deg = max(coeffs)
    return tuple(coeffs.get(i, 0) for i in range(deg + 1))


def format_polynomial(coeffs: Sequence[int], var: str = "x") -> str:
    parts = []
    for k in range(len(coeffs) - 1, -1, -1):
        c = coeffs[k]
        if c == 0:
            continue
        sign = "-" if c < 0 else ("+" if parts else "")
        mag = abs(c)
        if k == 0:
            body = str(mag)
        else:
            body = ("" if mag == 1 else str(mag)) + var + ("" if k == 1 else f"^{k}")
        parts.append(sign + body)
    return "".join(parts) or "0"


class MinimalPolynomial:
    """Normalized integer polynomial: content 1, positive leading coefficient."""

    def __init__(self, coeffs: Iterable):
        raw = [Fraction(c) for c in coeffs]
        while raw and raw[-1] == 0:
            raw.pop()
        if len(raw) < 2:
            raise ValueError("minimal polynomial must have degree >= 1")
        denom = 1
        for c in raw:
            denom = denom * c.denominator // gcd(denom, c.denominator)
        ints = [int(c * denom) for c in raw]
        g = 0
        for c in ints:
            g = gcd(g, abs(c))
        ints = [c // g for c in ints]
        if ints[-1] < 0:
            ints = [-c for c in ints]
        self.coeffs: tuple[int, ...] = tuple(ints)

    @classmethod
    def from_string(cls, text: str) -> "MinimalPolynomial":
        return cls(parse_polynomial(text))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def eval_at(self, x: Fraction) -> Fraction:
        return poly_eval([Fraction(c) for c in self.coeffs], x)

    def selmer_index(self) -> int | None:
        """n such that the polynomial is x^n + x - 1, else None."""
        c = self.coeffs
        n = self.degree
        if n >= 2 and c[0] == -1 and c[1] == 1 and c[-1] == 1 and all(v == 0 for v in c[2:-1]):
            return n
        return None

    def is_irreducible_checked(self) -> bool:
        """Desk-scale irreducibility check (degree <= 12), via sympy."""
        if self.degree == 1:
            return True
        if self.degree > 12:
            return False
        import sympy

        x = sympy.Symbol("x")
        poly = sum(c * x**i for i, c in enumerate(self.coeffs))
        return bool(sympy.Poly(poly, x).is_irreducible)

    def __eq__(self, other) -> bool:
        return isinstance(other, MinimalPolynomial) and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        return f"MinimalPolynomial({format_polynomial(self.coeffs)})"


_ISOLATION_WIDTH = Fraction(1, 2**20)


class AlgebraicField:
    """Q(r) with r the unique root of ``minpoly`` inside ``root_interval``.

    Immutable except for the memoized root interval, which is only ever
    replaced by a tighter one (refinement is idempotent, so concurrent
    refiners are harmless).
    """

    def __init__(self, minpoly: MinimalPolynomial, lo: Fraction, hi: Fraction,
                 irreducible: bool):
        self.minpoly = minpoly
        self.degree = minpoly.degree
        self._lo = lo
        self._hi = hi
        self.irreducibility_verified = irreducible
        self.selmer_n = minpoly.selmer_index()
        self.rational_root: Fraction | None = None
        if self.degree == 1:
            a0, a1 = minpoly.coeffs
            self.rational_root = Fraction(-a0, a1)
            self._lo = self._hi = self.rational_root
        # reduction table: x^k mod minpoly for k = d .. 2d-2
        d = self.degree
        lead = Fraction(minpoly.coeffs[-1])
        base = tuple(Fraction(-c, 1) / lead for c in minpoly.coeffs[:-1])
        table = [base]
        for _ in range(d - 2):
            prev = table[-1]
            shifted = [Fraction(0)] + list(prev[:-1])
            if prev[-1]:
                shifted = [shifted[i] + prev[-1] * base[i] for i in range(d)]
            table.append(tuple(shifted))
        self._xpow = table  # x^(d+k) -> table[k]
        self._cyl_cache: dict[tuple[int, int], FieldElement] = {}
        self._rpow: list[FieldElement] = []
        self._qpow: list[FieldElement] = []

    # -- construction of elements ------------------------------------------

    def element(self, coeffs: Iterable) -> "FieldElement":
        c = [Fraction(v) for v in coeffs]
        if len(c) > self.degree:
            raise ValueError("coefficient vector longer than field degree; use reduce()")
        c += [Fraction(0)] * (self.degree - len(c))
        return FieldElement(self, tuple(c))

    def zero(self) -> "FieldElement":
        return self.element([])

    def one(self) -> "FieldElement":
        return self.element([1])

    def root(self) -> "FieldElement":
        if self.degree == 1:
            return self.element([self.rational_root])
        return self.element([0, 1])

    def reduce_poly(self, coeffs: Iterable) -> "FieldElement":
        """Canonical representative of an arbitrary-degree polynomial in r."""
        c = [Fraction(v) for v in coeffs]
        d = self.degree
        if self.degree == 1:
            return self.element([poly_eval(c, self.rational_root)])
        while len(c) > d:
            top = c.pop()
            if top:
                k = len(c) - d  # reducing x^(d+k)
                while k >= len(self._xpow):
                    # extend the table on demand
                    prev = self._xpow[-1]
                    base = self._xpow[0]
                    shifted = [Fraction(0)] + list(prev[:-1])
                    if prev[-1]:
                        shifted = [shifted[i] + prev[-1] * base[i] for i in range(d)]
                    self._xpow.append(tuple(shifted))
                red = self._xpow[k]
                for i in range(d):
                    c[i] += top * red[i]
        return self.element(c)

    # -- cylinder sizes -----------------------------------------------------

    def cylinder(self, a: int, b: int) -> "FieldElement":
        """r^a * (1-r)^b, reduced."""
        if a < 0 or b < 0:
            raise ValueError("cylinder exponents must be nonnegative")
        key = (a, b)
        hit = self._cyl_cache.get(key)
        if hit is not None:
            return hit
        val = self._power_of(self._rpow, self.root(), a) * \
            self._power_of(self._qpow, self.one() - self.root(), b)
        self._cyl_cache[key] = val
        return val

    def _power_of(self, cache: list, base: "FieldElement", k: int) -> "FieldElement":
        if not cache:
            cache.append(self.one())
        while len(cache) <= k:
            cache.append(cache[-1] * base)
        return cache[k]

    # -- root interval and signs ---------------------------------------------

    @property
    def root_interval(self) -> tuple[Fraction, Fraction]:
        return (self._lo, self._hi)

    def refine_root_interval(self, width: Fraction) -> tuple[Fraction, Fraction]:
        lo, hi = self._lo, self._hi
        if hi - lo <= width:
            return lo, hi
        flo = self.minpoly.eval_at(lo)
        while hi - lo > width:
            mid = (lo + hi) / 2
            fmid = self.minpoly.eval_at(mid)
            if fmid == 0:
                # root is exactly rational: collapse the interval
                lo = hi = mid
                break
            if (flo < 0) == (fmid < 0):
                lo, flo = mid, fmid
            else:
                hi = mid
        self._lo, self._hi = lo, hi
        return lo, hi

    def sign(self, elem: "FieldElement") -> int:
        if all(c == 0 for c in elem.coeffs):
            return 0
        if self.rational_root is not None:
            v = poly_eval(elem.coeffs, self.rational_root)
            return 0 if v == 0 else (1 if v > 0 else -1)
        den = math.lcm(*(c.denominator for c in elem.coeffs))
        ic = [int(c * den) for c in elem.coeffs]
        s = 64
        while s <= (1 << 24):
            lo, hi = self._ieval(ic, s)
            if lo > 0:
                return 1
            if hi < 0:
                return -1
            s *= 2
        raise NumberFieldError(
            "sign undecided after refinement; is the minimal polynomial irreducible?")

    # -- integer fixed-point evaluation ---------------------------------------
    #
    # Signs and approximations are decided with pure integer interval
    # arithmetic at scale 2^s: vastly cheaper than Fraction arithmetic once
    # coefficients grow.

    def _ipoly(self, n: int, s: int) -> int:
        """2^(s*degree) * minpoly(n / 2^s), exactly."""
        coeffs = self.minpoly.coeffs
        acc = coeffs[-1]
        shift = 0
        for c in reversed(coeffs[:-1]):
            shift += s
            acc = acc * n + (c << shift)
        return acc

    def _int_enclosure(self, s: int) -> tuple[int, int]:
        """Integers (nlo, nhi) with nlo/2^s < root < nhi/2^s and nhi-nlo <= 2."""
        cur = getattr(self, "_ienc", None)
        if cur is None:
            s0 = 16
            while True:
                nlo = self._lo.numerator * (1 << s0) // self._lo.denominator
                nhi = -((-self._hi.numerator * (1 << s0)) // self._hi.denominator)
                if self._ipoly(nlo, s0) != 0 and self._ipoly(nhi, s0) != 0 \
                        and (self._ipoly(nlo, s0) < 0) != (self._ipoly(nhi, s0) < 0):
                    break
                # outward rounding brushed another sign change; tighten first
                self.refine_root_interval((self._hi - self._lo) / 256)
                s0 += 8
            cur = (s0, nlo, nhi)
        cs, nlo, nhi = cur
        if cs < s:
            shift = s - cs
            nlo <<= shift
            nhi <<= shift
            cs = s
        elif cs > s:
            d = cs - s
            return (nlo >> d), -((-nhi) >> d)
        flo = self._ipoly(nlo, cs)
        while nhi - nlo > 2:
            mid = (nlo + nhi) // 2
            fmid = self._ipoly(mid, cs)
            if fmid == 0:  # pragma: no cover - irreducible minpoly, no dyadic root
                nlo, nhi = mid - 1, mid + 1
                break
            if (flo < 0) == (fmid < 0):
                nlo, flo = mid, fmid
            else:
                nhi = mid
        self._ienc = (cs, nlo, nhi)
        return nlo, nhi

    def _ieval(self, int_coeffs: Sequence[int], s: int) -> tuple[int, int]:
        """Conservative integer bounds at scale 2^s for sum(c_i * root^i)."""
        nlo, nhi = self._int_enclosure(s)
        lo = hi = 0
        for c in reversed(int_coeffs):
            a, b, cc, d = lo * nlo, lo * nhi, hi * nlo, hi * nhi
            l2 = min(a, b, cc, d)
            h2 = max(a, b, cc, d)
            lo = (l2 >> s) + (c << s)
            hi = -((-h2) >> s) + (c << s)
        return lo, hi

    def _eval_interval(self, coeffs: Sequence[Fraction]) -> tuple[Fraction, Fraction]:
        lo = hi = Fraction(0)
        xlo, xhi = self._lo, self._hi
        for c in reversed(coeffs):
            cands = (lo * xlo, lo * xhi, hi * xlo, hi * xhi)
            lo, hi = min(cands) + c, max(cands) + c
        return lo, hi

    def approximate(self, elem: "FieldElement", eps: Fraction) -> tuple[Fraction, Fraction]:
        """Rational interval of width < eps containing the value of ``elem``."""
        if self.rational_root is not None:
            v = poly_eval(elem.coeffs, self.rational_root)
            return (v, v)
        den = math.lcm(*(c.denominator for c in elem.coeffs))
        ic = [int(c * den) for c in elem.coeffs]
        s = 64
        while True:
            lo, hi = self._ieval(ic, s)
            if Fraction(hi - lo, den << s) < eps:
                return Fraction(lo, den << s), Fraction(hi, den << s)
            s *= 2

    def root_float(self) -> float:
        lo, hi = self.refine_root_interval(Fraction(1, 2**52))
        return float((lo + hi) / 2)

    def __eq__(self, other) -> bool:
        return isinstance(other, AlgebraicField) and self.minpoly == other.minpoly \
            and self.root_interval == other.root_interval

    def __hash__(self) -> int:
        return hash(self.minpoly)

    def __repr__(self) -> str:
        lo, hi = self.root_interval
        return f"AlgebraicField({format_polynomial(self.minpoly.coeffs)}, root in ({lo}, {hi}))"


class FieldElement:
    """c0 + c1*r + ... + c_{d-1}*r^{d-1} with exact rational coefficients."""

    __slots__ = ("field", "coeffs")

    def __init__(self, field: AlgebraicField, coeffs: tuple[Fraction, ...]):
        self.field = field
        self.coeffs = coeffs

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def _check(self, other: "FieldElement") -> None:
        if self.field is not other.field and self.field != other.field:
            raise ValueError("elements belong to different fields")

    def __add__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return FieldElement(self.field, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        return FieldElement(self.field, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "FieldElement":
        return FieldElement(self.field, tuple(-a for a in self.coeffs))

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        self._check(other)
        a, b = self.coeffs, other.coeffs
        d = len(a)
        prod = [Fraction(0)] * (2 * d - 1)
        for i, ai in enumerate(a):
            if not ai:
                continue
            for j, bj in enumerate(b):
                if bj:
                    prod[i + j] += ai * bj
        return self.field.reduce_poly(prod)

    def __pow__(self, k: int) -> "FieldElement":
        if k < 0:
            raise ValueError("negative powers not supported")
        acc = self.field.one()
        base = self
        while k:
            if k & 1:
                acc = acc * base
            base = base * base
            k >>= 1
        return acc

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldElement) and self.coeffs == other.coeffs \
            and self.field.minpoly == other.field.minpoly

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def sign(self) -> int:
        return self.field.sign(self)

    def to_json(self) -> dict:
        return {"coeffs": [str(c) for c in self.coeffs]}

    @classmethod
    def from_json(cls, data: dict, field: AlgebraicField) -> "FieldElement":
        return field.element([Fraction(c) for c in data["coeffs"]])

    def __repr__(self) -> str:
        return f"FieldElement({', '.join(str(c) for c in self.coeffs)})"


def make_field(minpoly: MinimalPolynomial | str | Sequence,
               interval: tuple = (0, 1)) -> AlgebraicField:
    """Build Q(r) after verifying that ``interval`` isolates one root in (0, 1)."""
    if isinstance(minpoly, str):
        minpoly = MinimalPolynomial.from_string(minpoly)
    elif not isinstance(minpoly, MinimalPolynomial):
        minpoly = MinimalPolynomial(minpoly)
    lo, hi = Fraction(interval[0]), Fraction(interval[1])
    if not (0 <= lo < hi <= 1):
        raise DegenerateInterval(f"interval ({lo}, {hi}) is not a subinterval of [0, 1]")
    # nudge endpoints off roots so Sturm counting is clean
    while minpoly.eval_at(lo) == 0 or minpoly.eval_at(hi) == 0:
        shrink = (hi - lo) / 1024
        if minpoly.eval_at(lo) == 0:
            lo += shrink
        if minpoly.eval_at(hi) == 0:
            hi -= shrink
        if lo >= hi:
            raise DegenerateInterval("interval degenerates while avoiding endpoint roots")
    n = count_real_roots([Fraction(c) for c in minpoly.coeffs], lo, hi)
    if n == 0:
        raise NoRootInInterval(f"{minpoly!r} has no root in ({lo}, {hi})")
    if n > 1:
        raise MultipleRootsInInterval(f"{minpoly!r} has {n} roots in ({lo}, {hi})")
    irreducible = minpoly.is_irreducible_checked()
    field = AlgebraicField(minpoly, lo, hi, irreducible)
    field.refine_root_interval(_ISOLATION_WIDTH)
    flo, fhi = field.root_interval
    if not (0 < flo or 0 < fhi) or fhi > 1:
        raise NoRootInInterval("designated root does not lie strictly inside (0, 1)")
    return field


# -- spec-level operation aliases -------------------------------------------

def reduce(poly: Sequence, field: AlgebraicField) -> FieldElement:
    return field.reduce_poly(poly)


def arith(op: str, x: FieldElement, y) -> FieldElement:
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "power":
        return x ** int(y)
    raise ValueError(f"unknown operation {op!r}")


def eval_cylinder(a: int, b: int, field: AlgebraicField) -> FieldElement:
    return field.cylinder(a, b)


def sign_and_interval(x: FieldElement, eps) -> tuple[int, tuple[Fraction, Fraction]]:
    s = x.field.sign(x)
    if s == 0:
        return 0, (Fraction(0), Fraction(0))
    return s, x.field.approximate(x, Fraction(eps))
