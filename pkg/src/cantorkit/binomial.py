"""Representations s = sum a_i r^i (1-r)^(n-i) with 0 <= a_i <= C(n,i).

Such a representation exhibits one Bernoulli parameter as a depth-n
coefficient pattern over another.  The closure operations (complement,
product, cylinder powers) are purely combinatorial; only verification and
search touch the number field.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

from cantorkit.numberfield import AlgebraicField, FieldElement


class CoefficientOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class BinomialRep:
    n: int
    a: tuple[int, ...]

    def __post_init__(self):
        if self.n < 0 or len(self.a) != self.n + 1:
            raise CoefficientOutOfRange(
                f"need n+1 = {self.n + 1} coefficients, got {len(self.a)}")
        for i, ai in enumerate(self.a):
            if not (0 <= ai <= comb(self.n, i)):
                raise CoefficientOutOfRange(
                    f"a_{i} = {ai} outside 0..C({self.n},{i})")

    def value(self, field: AlgebraicField) -> FieldElement:
        acc = field.zero()
        for i, ai in enumerate(self.a):
            if ai:
                acc = acc + field.element([ai]) * field.cylinder(i, self.n - i)
        return acc

    def polynomial(self) -> tuple[int, ...]:
        """Coefficients of sum a_i x^i (1-x)^(n-i), constant term first."""
        out = [0] * (self.n + 1)
        for i, ai in enumerate(self.a):
            if not ai:
                continue
            # x^i (1-x)^(n-i) expanded by the binomial theorem
            for k in range(self.n - i + 1):
                out[i + k] += ai * (-1) ** k * comb(self.n - i, k)
        while out and out[-1] == 0:
            out.pop()
        return tuple(out)

    def to_json(self) -> dict:
        return {"n": self.n, "a": list(self.a)}

    @classmethod
    def from_json(cls, data: dict) -> "BinomialRep":
        return cls(int(data["n"]), tuple(int(x) for x in data["a"]))


@dataclass(frozen=True)
class NotFound:
    n_max: int


def verify_rep(rep: BinomialRep, target: FieldElement,
               field: AlgebraicField) -> bool:
    return rep.value(field) == target


def complement_rep(rep: BinomialRep) -> BinomialRep:
    return BinomialRep(rep.n, tuple(comb(rep.n, i) - ai
                                    for i, ai in enumerate(rep.a)))


def product_rep(rep1: BinomialRep, rep2: BinomialRep) -> BinomialRep:
    n = rep1.n + rep2.n
    a = [0] * (n + 1)
    for i, ai in enumerate(rep1.a):
        for j, bj in enumerate(rep2.a):
            a[i + j] += ai * bj
    # Vandermonde: sum_{i+j=k} C(n1,i) C(n2,j) = C(n1+n2,k), so the bound holds
    return BinomialRep(n, tuple(a))


def cylinder_rep(p: int, q: int, rep: BinomialRep) -> BinomialRep:
    if p < 0 or q < 0:
        raise ValueError("cylinder exponents must be nonnegative")
    out = BinomialRep(0, (1,))
    for _ in range(p):
        out = product_rep(out, rep)
    if q:
        cpl = complement_rep(rep)
        for _ in range(q):
            out = product_rep(out, cpl)
    return out


def search_rep(target: FieldElement, field: AlgebraicField,
               n_max: int = 8) -> BinomialRep | NotFound:
    """Least-n, lexicographically least representation of the target.

    Depth-first over coefficient vectors with a float residual window for
    pruning and an exact residual check at the leaves.  States that failed
    for every suffix are memoized by (position, exact residual).
    """
    for n in range(n_max + 1):
        cyl_vals = [field.cylinder(i, n - i) for i in range(n + 1)]
        rf = field.root_float()
        cyl_flt = [rf ** i * (1.0 - rf) ** (n - i) for i in range(n + 1)]
        bounds = [comb(n, i) for i in range(n + 1)]
        # max achievable by positions i..n
        suffix_max = [0.0] * (n + 2)
        for i in range(n, -1, -1):
            suffix_max[i] = suffix_max[i + 1] + bounds[i] * cyl_flt[i]
        tlo, thi = field.approximate(target, Fraction(1, 2**40))
        tflt = float((tlo + thi) / 2)
        eps = 1e-7
        dead: set[tuple[int, tuple]] = set()
        chosen: list[int] = []

        def go(i: int, residual: FieldElement, rflt: float) -> bool:
            if i > n:
                return residual.is_zero()
            key = (i, residual.coeffs)
            if key in dead:
                return False
            if rflt < -eps or rflt > suffix_max[i] + eps:
                dead.add(key)
                return False
            for ai in range(bounds[i] + 1):
                nres = residual - field.element([ai]) * cyl_vals[i] if ai else residual
                if go(i + 1, nres, rflt - ai * cyl_flt[i]):
                    chosen.append(ai)
                    return True
            dead.add(key)
            return False

        if go(0, target, tflt):
            return BinomialRep(n, tuple(reversed(chosen)))
    return NotFound(n_max)


def degree_le1_representations(n_max: int = 3) -> set[tuple[int, ...]]:
    """All polynomials of degree <= 1 realized by any representation with n <= n_max.

    Exhaustive over the coefficient boxes; constant term first, so the
    possible outcomes are () for 0, (1,) for 1, (0, 1) for x and (1, -1)
    for 1 - x.
    """

    def rows(n: int, i: int):
        if i > n:
            yield ()
            return
        for rest in rows(n, i + 1):
            for ai in range(comb(n, i) + 1):
                yield (ai,) + rest

    out: set[tuple[int, ...]] = set()
    for n in range(n_max + 1):
        for a in rows(n, 0):
            poly = BinomialRep(n, a).polynomial()
            if len(poly) <= 2:
                out.add(poly)
    return out
