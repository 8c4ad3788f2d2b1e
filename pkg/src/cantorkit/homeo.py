"""Back-and-forth construction of exactly measure-preserving clopen tables.

Stages (P_n, Q_n, pi_n) pair partitions of two Cantor spaces carrying the
Bernoulli measures of r and of s.  Odd steps refine the P side into basic
clopen sets; even steps do the same on the Q side with the roles of the two
measures swapped.  Every cell measure equality is checked exactly by
embedding the s-field into the r-field through the representation of s.
"""

from __future__ import annotations

from collections import Counter
from math import comb
from dataclasses import dataclass
from typing import Callable, Sequence

from cantorkit.binomial import BinomialRep, cylinder_rep
from cantorkit.cylinder import Cylinder, address_size
from cantorkit.numberfield import AlgebraicField, FieldElement, make_field
from cantorkit.refiner import (
    GreedyCarve,
    R4Square,
    RefinerError,
    S_FIELD_COEFFS,
    Selmer,
    Strategy,
    carve_expansions,
    merge_pieces,
    refine_with_fallback,
)
from cantorkit.rewrite import FuelExhausted


class HomeoError(Exception):
    pass


class RefinementFailed(HomeoError):
    pass


class MeasureMismatch(HomeoError):
    pass


@dataclass(frozen=True)
class ClopenCell:
    addresses: tuple[str, ...]

    def __post_init__(self):
        addrs = tuple(sorted(self.addresses))
        object.__setattr__(self, "addresses", addrs)
        for i, x in enumerate(addrs):
            for y in addrs[i + 1:]:
                if x.startswith(y) or y.startswith(x):
                    raise HomeoError(f"addresses {x!r} and {y!r} overlap")

    def measure(self, field: AlgebraicField) -> FieldElement:
        acc = field.zero()
        for addr in self.addresses:
            size = address_size(addr)
            acc = acc + field.cylinder(size.a, size.b)
        return acc

    def contains(self, other: "ClopenCell") -> bool:
        return all(any(a.startswith(b) for b in self.addresses)
                   for a in other.addresses)

    def is_basic(self) -> bool:
        return len(self.addresses) == 1

    def min_length(self) -> int:
        return min(len(a) for a in self.addresses)


@dataclass(frozen=True)
class HomeoStage:
    index: int
    p: tuple[ClopenCell, ...]
    q: tuple[ClopenCell, ...]
    pi: tuple[int, ...]  # pi[i] is the Q index matched to P cell i

    def pairs(self) -> list[tuple[ClopenCell, ClopenCell]]:
        return [(x, self.q[self.pi[i]]) for i, x in enumerate(self.p)]


def init_stage() -> HomeoStage:
    full = ClopenCell(("",))
    return HomeoStage(0, (full,), (full,), (0,))


def make_embedding(field_r: AlgebraicField,
                   rep_s_in_r: BinomialRep) -> Callable[[FieldElement], FieldElement]:
    """Carry elements of the s-field into the r-field via s's representation."""
    s_in_r = rep_s_in_r.value(field_r)

    def embed(elem: FieldElement) -> FieldElement:
        acc = field_r.zero()
        power = field_r.one()
        for c in elem.coeffs:
            if c:
                acc = acc + field_r.element([c]) * power
            power = power * s_in_r
        return acc

    return embed


def _tower_pieces(field_x: AlgebraicField, field_y: AlgebraicField,
                  a: int, b: int) -> Counter | None:
    """Expansion of an s cylinder size into r shapes for the r4 tower.

    With r the root of x^4 + x - 1 and s = r^2, we have s = r^2 and
    1 - s = (1-r)(1+r), so s^a (1-s)^b expands into b+1 shapes with
    binomial multiplicities.  This is far smaller than multiplying out
    the binomial representation factor by factor, which cubes the piece
    count per 1-s factor.  Returns None when the fields are not this
    tower; the generic representation expansion applies then.
    """
    if (field_x.minpoly.coeffs == S_FIELD_COEFFS
            and field_y.selmer_n == 4):
        return Counter({(2 * a + i, b): comb(b, i) for i in range(b + 1)})
    return None


def _tree_key(addr: str) -> tuple[int, ...]:
    """Sort key giving depth-first tree order with the 1-branch first.

    Measure carving lays capacity out over the 1-subtree before the
    0-subtree, so addresses must be visited in the same order.
    """
    return tuple(1 - int(c) for c in addr)


def _advance(pairs: Sequence[tuple[ClopenCell, ClopenCell]],
             field_x: AlgebraicField, field_y: AlgebraicField,
             rep_x_in_y: BinomialRep, length: int,
             strategies: Sequence[Strategy], fuel: int
             ) -> list[tuple[ClopenCell, ClopenCell]]:
    """One step: refine the X side to basic cells of the given length and
    partition each matched basic Y cell into exactly matching clopen images.

    Each refined X address expands, through the representation of the X
    parameter over the Y field, into a list of Y-cylinder sizes.  The
    concatenated size list is refined inside Y by the move strategies, and
    the resulting leaves are regrouped per X address in concatenation order.
    """
    new_pairs: list[tuple[ClopenCell, ClopenCell]] = []
    for x_cell, y_cell in pairs:
        xs: list[str] = []
        for addr in sorted(x_cell.addresses, key=_tree_key):
            want = max(len(addr), length)
            ext = want - len(addr)
            xs.extend(addr + format(i, f"0{ext}b") if ext else addr
                      for i in range(2 ** ext - 1, -1, -1))
        if not y_cell.is_basic():
            raise HomeoError("refinement target is not a basic clopen set")
        y_addr = y_cell.addresses[0]
        y_size = address_size(y_addr)
        items: list[tuple[int, Cylinder, int]] = []
        for j, x_addr in enumerate(xs):
            size = address_size(x_addr)
            shapes = _tower_pieces(field_x, field_y, size.a, size.b)
            if shapes is None:
                exp = cylinder_rep(size.a, size.b, rep_x_in_y)
                shapes = merge_pieces(Counter(
                    {(i, exp.n - i): ai for i, ai in enumerate(exp.a)}))
            for (a, b), cnt in sorted(shapes.items()):
                items.append((j, Cylinder(a, b), cnt))
        try:
            leaves = carve_expansions(field_y, y_size, items, fuel=fuel)
        except (RefinerError, FuelExhausted):
            parts = [c for j, c, cnt in items for _ in range(cnt)]
            owner = [j for j, c, cnt in items for _ in range(cnt)]
            try:
                cert = refine_with_fallback(field_y, y_size, parts, strategies)
            except (RefinerError, FuelExhausted) as exc:
                raise RefinementFailed(
                    f"could not refine inside {y_addr!r}: {exc}") from exc
            leaves = {bits: owner[idx - 1]
                      for bits, idx in cert.grouping.items()}
        groups: dict[int, list[str]] = {j: [] for j in range(len(xs))}
        for bits, j in leaves.items():
            groups[j].append(y_addr + bits)
        for j, x_addr in enumerate(xs):
            new_pairs.append((ClopenCell((x_addr,)), ClopenCell(tuple(groups[j]))))
    return new_pairs


def verify_stage(stage: HomeoStage, prev: HomeoStage | None,
                 field_r: AlgebraicField, field_s: AlgebraicField,
                 embed: Callable[[FieldElement], FieldElement]) -> None:
    """Exact re-check of the four stage invariants."""
    from cantorkit.cylinder import TreePartition, validate_tree_partition
    for cells in (stage.p, stage.q):
        leaves = [a for cell in cells for a in cell.addresses]
        validate_tree_partition(TreePartition(leaves, root=""))
    if sorted(stage.pi) != list(range(len(stage.q))) or len(stage.p) != len(stage.q):
        raise HomeoError("pi is not a bijection")
    for x_cell, y_cell in stage.pairs():
        if embed(y_cell.measure(field_s)) != x_cell.measure(field_r):
            raise MeasureMismatch(f"measure of {y_cell} differs from {x_cell}")
    if prev is not None:
        prev_pairs = prev.pairs()
        for x_cell, y_cell in stage.pairs():
            parents = [(px, py) for px, py in prev_pairs if px.contains(x_cell)]
            if len(parents) != 1:
                raise HomeoError("a cell is not inside exactly one parent")
            if not parents[0][1].contains(y_cell):
                raise HomeoError("pi is incompatible with the previous stage")
    # mesh: P cells at odd stages, Q cells at positive even stages are basic
    n = (stage.index + 1) // 2
    if stage.index % 2 == 1:
        if any(not c.is_basic() or c.min_length() < n for c in stage.p):
            raise HomeoError("P mesh condition violated")
    elif stage.index > 0:
        if any(not c.is_basic() or c.min_length() < n for c in stage.q):
            raise HomeoError("Q mesh condition violated")


def advance_stage(stage: HomeoStage, field_r: AlgebraicField,
                  field_s: AlgebraicField, rep_r_in_s: BinomialRep,
                  rep_s_in_r: BinomialRep,
                  strategies: Sequence[Strategy] | None = None,
                  fuel: int = 10**6) -> HomeoStage:
    """Advance one step; even indices refine P, odd indices refine Q.

    ``strategies`` defaults to the dedicated move systems with a greedy
    carve fallback; inapplicable strategies are skipped per field.
    """
    if strategies is None:
        strategies = (Selmer(), R4Square(), GreedyCarve(fuel=fuel))
    t = stage.index
    length = t // 2 + 1 if t % 2 == 0 else (t + 1) // 2
    if t % 2 == 0:
        new_pairs = _advance(stage.pairs(), field_r, field_s, rep_r_in_s,
                             length, strategies, fuel)
        p = tuple(x for x, _ in new_pairs)
        q = tuple(y for _, y in new_pairs)
    else:
        swapped = [(y, x) for x, y in stage.pairs()]
        new_pairs = _advance(swapped, field_s, field_r, rep_s_in_r,
                             length, strategies, fuel)
        p = tuple(x for _, x in new_pairs)
        q = tuple(y for y, _ in new_pairs)
    return HomeoStage(t + 1, p, q, tuple(range(len(p))))


def build(field_r: AlgebraicField, field_s: AlgebraicField,
          rep_r_in_s: BinomialRep, rep_s_in_r: BinomialRep, depth: int,
          strategies: Sequence[Strategy] | None = None,
          fuel: int = 10**6, verify: bool = True) -> list[HomeoStage]:
    embed = make_embedding(field_r, rep_s_in_r)
    stages = [init_stage()]
    if verify:
        verify_stage(stages[0], None, field_r, field_s, embed)
    for _ in range(depth):
        nxt = advance_stage(stages[-1], field_r, field_s, rep_r_in_s,
                            rep_s_in_r, strategies, fuel)
        if verify:
            verify_stage(nxt, stages[-1], field_r, field_s, embed)
        stages.append(nxt)
    return stages


def export_table(stages: Sequence[HomeoStage], field_r: AlgebraicField,
                 field_s: AlgebraicField) -> list[dict]:
    if not stages:
        raise HomeoError("need at least one stage")
    last = stages[-1]
    rows = []
    total_r, total_s = field_r.zero(), field_s.zero()
    for x_cell, y_cell in last.pairs():
        mr, ms = x_cell.measure(field_r), y_cell.measure(field_s)
        total_r, total_s = total_r + mr, total_s + ms
        rows.append({"src": list(x_cell.addresses), "dst": list(y_cell.addresses),
                     "measure_r": mr.to_json(), "measure_s": ms.to_json()})
    if total_r != field_r.one() or total_s != field_s.one():
        raise MeasureMismatch("table rows do not sum to full measure")
    return rows


def complement_map(field: AlgebraicField) -> list[dict]:
    """The depth-1 bit-flip table exchanging the measures of r and 1 - r."""
    r = field.root()
    q = field.one() - r
    return [
        {"src": ["1"], "dst": ["0"], "measure_r": r.to_json(),
         "measure_s": r.to_json()},
        {"src": ["0"], "dst": ["1"], "measure_r": q.to_json(),
         "measure_s": q.to_json()},
    ]


def flagship_pair() -> tuple[AlgebraicField, AlgebraicField, BinomialRep, BinomialRep]:
    """The quartic pair: r with r^4 + r = 1 and s = r^2."""
    from fractions import Fraction
    field_r = make_field("x^4+x-1", (Fraction(1, 2), Fraction(4, 5)))
    field_s = make_field("x^4-2x^2-x+1", (Fraction(1, 2), Fraction(3, 5)))
    rep_s_in_r = BinomialRep(2, (0, 0, 1))   # s = r^2
    rep_r_in_s = BinomialRep(2, (1, 2, 0))   # r = (1-s)^2 + 2 s(1-s) = 1 - s^2
    return field_r, field_s, rep_r_in_s, rep_s_in_r
