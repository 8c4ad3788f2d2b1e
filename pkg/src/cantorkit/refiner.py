"""Refinability strategies producing tree-partition certificates.

Two canonicalizing move systems are implemented:

* Selmer fields x^n + x - 1: eliminate (1-r) factors through the relation
  1 - r = r^n, then split powers upward until everything lies in the window
  r^(k-n+1) .. r^k.  Those n powers are linearly independent over Q, so
  equal-sum multisets reach identical canonical forms.

* the quartic pair field of s (minpoly x^4 - 2x^2 - x + 1, where s = r^2 and
  r = 1 - s^2): band reduction with the eqc/eqb macro moves, pumping with
  eqd/eqe, and a final cleanup onto the four sizes s^k(1-s)^(k-1),
  s^(k-1)(1-s)^k, s^k(1-s)^k, s^(k+1)(1-s)^k.

Every macro move has two realizations producing the same products: a single
arbitrary split (for the B side) and a tree-move fragment (for the A side).
A bounded generic search and a greedy exact carver cover fields without a
dedicated move system.
"""

from __future__ import annotations

import itertools
import heapq
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from cantorkit.cylinder import (
    Cylinder,
    CylinderMultiset,
    RefinementWitness,
    TreePartition,
    multiset_sum,
    validate_tree_partition,
    witness_from_grouping,
)
from cantorkit.numberfield import AlgebraicField, FieldElement, format_polynomial
from cantorkit.rewrite import (
    FuelExhausted,
    Trace,
    TraceBuilder,
    extract_refinement,
    realize_power_split,
)

S_FIELD_COEFFS = (1, -1, -2, 0, 1)  # x^4 - 2x^2 - x + 1, the field of s = r^2


class RefinerError(Exception):
    pass


class SumMismatchError(RefinerError):
    pass


class StrategyInapplicable(RefinerError):
    pass


class WindowTooSmall(RefinerError):
    pass


class NotFoundWithinBounds(RefinerError):
    def __init__(self, bounds):
        super().__init__(f"no refinement found within bounds {bounds}")
        self.bounds = bounds


class DepthTooLarge(RefinerError):
    pass


# ---------------------------------------------------------------------------
# macro moves

def eqb_products(a: int, b: int) -> list[Cylinder]:
    out = [Cylinder(a + 1, b), Cylinder(a + 2, b), Cylinder(a + 2, b + 1),
           Cylinder(a + 3, b + 1)]
    assert all(c.a - c.b > a - b for c in out)  # band meter: a-b strictly increases
    return out


def eqc_products(a: int, b: int) -> list[Cylinder]:
    if a < 1:
        raise StrategyInapplicable("eqc needs a >= 1")
    out = [Cylinder(a - 1, b + 2), Cylinder(a, b + 2), Cylinder(a, b + 2),
           Cylinder(a + 1, b + 2)]
    assert all(c.a - c.b < a - b for c in out)  # band meter: a-b strictly decreases
    return out


def eqd_products(a: int, b: int) -> list[Cylinder]:
    out = [Cylinder(a + 1, b)] + eqb_products(a, b + 1)
    assert all(c.depth > a + b for c in out)  # pump meter: depth strictly increases
    return out


def eqe_products(a: int, b: int) -> list[Cylinder]:
    out = [Cylinder(a, b + 1)]
    out += [Cylinder(a + 1, b + 2)] * 3
    out += [Cylinder(a + 2, b + 2)] * 2
    out += [Cylinder(a + 2, b + 3), Cylinder(a + 3, b + 3)]
    assert all(c.depth > a + b for c in out)
    return out


def tsplit_products(a: int, b: int) -> list[Cylinder]:
    return [Cylinder(a + 1, b), Cylinder(a, b + 1)]


def _eqa_split_fragment(builder: TraceBuilder, item: int) -> dict[str, int]:
    """Tree splits from one item to the seven-leaf address set of the eqa display."""
    m: dict[str, int] = {}
    m["1"], m["0"] = builder.tree_split(item)
    m["11"], m["10"] = builder.tree_split(m["1"])
    m["01"], m["00"] = builder.tree_split(m["0"])
    m["101"], m["100"] = builder.tree_split(m["10"])
    m["011"], m["010"] = builder.tree_split(m["01"])
    m["0111"], m["0110"] = builder.tree_split(m["011"])
    return m


def _eqb_tree(builder: TraceBuilder, item: int) -> list[int]:
    a, b = builder.label_of(item)
    m = _eqa_split_fragment(builder, item)
    merged = builder.merge([m["00"], m["100"], m["010"], m["0110"]], Cylinder(a + 1, b))
    return [merged, m["11"], m["101"], m["0111"]]


def _eqc_tree(builder: TraceBuilder, item: int) -> list[int]:
    a, b = builder.label_of(item)
    if a < 1:
        raise StrategyInapplicable("eqc needs a >= 1")
    m = _eqa_split_fragment(builder, item)
    m["1011"], m["1010"] = builder.tree_split(m["101"])
    m["10101"], m["10100"] = builder.tree_split(m["1010"])
    m["101011"], m["101010"] = builder.tree_split(m["10101"])
    m1 = builder.merge([m["100"], m["0110"], m["10100"], m["101010"]],
                       Cylinder(a, b + 2))
    m2 = builder.merge([m["11"], m["0111"], m["1011"], m["101011"]],
                       Cylinder(a - 1, b + 2))
    # products in display order: (a-1,b+2), (a,b+2) x2, (a+1,b+2)
    return [m2, m1, m["00"], m["010"]]


def _eqd_tree(builder: TraceBuilder, item: int) -> list[int]:
    child1, child0 = builder.tree_split(item)
    return [child1] + _eqb_tree(builder, child0)


def _eqe_tree(builder: TraceBuilder, item: int) -> list[int]:
    a, b = builder.label_of(item)
    child1, child0 = builder.tree_split(item)
    eqc_ids = _eqc_tree(builder, child1)
    # the (a, b+2)-labeled product of the eqc fragment gets the eqb move
    target = next(i for i in eqc_ids if builder.label_of(i) == Cylinder(a, b + 2))
    rest = [i for i in eqc_ids if i != target]
    return [child0] + rest + _eqb_tree(builder, target)


def _tsplit_tree(builder: TraceBuilder, item: int) -> list[int]:
    return list(builder.tree_split(item))


def _selmer_products(field: AlgebraicField) -> Callable[[int, int], list[Cylinder]]:
    n = field.selmer_n
    return lambda a, b: [Cylinder(a + 1, 0), Cylinder(a + n, 0)]


MACROS: dict[str, tuple[Callable[[int, int], list[Cylinder]], Callable]] = {
    "eqb": (eqb_products, _eqb_tree),
    "eqc": (eqc_products, _eqc_tree),
    "eqd": (eqd_products, _eqd_tree),
    "eqe": (eqe_products, _eqe_tree),
    "tsplit": (tsplit_products, _tsplit_tree),
}


# ---------------------------------------------------------------------------
# workspaces: the two execution backends for the canonicalizers

class TraceWorkspace:
    """Id-tracked backend; every macro application lands in a trace."""

    def __init__(self, field: AlgebraicField, initial: Sequence[Cylinder],
                 as_tree: bool, fuel: int = 10**6):
        self.field = field
        self.as_tree = as_tree
        self.builder = TraceBuilder(field, initial, fuel=fuel)
        self.buckets: dict[Cylinder, list[int]] = {}
        for i, cyl in self.builder.initial:
            self.buckets.setdefault(cyl, []).append(i)

    def support(self) -> dict[Cylinder, int]:
        return {cyl: len(ids) for cyl, ids in self.buckets.items() if ids}

    def _push(self, item: int) -> None:
        self.buckets.setdefault(self.builder.label_of(item), []).append(item)

    def apply_macro(self, name: str, label: Cylinder, count: int | None = None) -> None:
        ids = self.buckets.get(label, [])
        todo = len(ids) if count is None else count
        products_fn, tree_fn = MACROS[name]
        for _ in range(todo):
            item = self.buckets[label].pop()
            if self.as_tree:
                for out in tree_fn(self.builder, item):
                    self._push(out)
            else:
                products = products_fn(*label)
                for out in self.builder.split(item, products):
                    self._push(out)

    def bar_eliminate(self, label: Cylinder) -> None:
        n = self.field.selmer_n
        a, b = label
        new_label = Cylinder(a + n, b - 1)
        ids = self.buckets.pop(label, [])
        for item in ids:
            self.builder.rewrite(item, new_label)
            self._push(item)

    def selmer_split(self, label: Cylinder) -> None:
        ids = self.buckets.pop(label, [])
        for item in ids:
            for out in realize_power_split(self.builder, item, as_tree=self.as_tree):
                self._push(out)

    def result(self) -> tuple[CylinderMultiset, Trace]:
        trace = self.builder.finish()
        return trace.final_multiset(), trace


class FastWorkspace:
    """Counter backend; multiplicities are applied in one step.

    Each distinct (macro, label) pair still gets its dual realizations
    validated exactly once: the split products are summed in the field and
    the tree fragment is replayed on a one-item trace.
    """

    _validated: set[tuple[tuple[int, ...], str, Cylinder]] = set()

    def __init__(self, field: AlgebraicField, initial: CylinderMultiset,
                 fuel: int = 10**6, validate: bool = True):
        self.field = field
        self.counts: dict[Cylinder, int] = dict(initial.items())
        self.fuel = fuel
        self.validate = validate

    def _spend(self) -> None:
        self.fuel -= 1
        if self.fuel < 0:
            raise FuelExhausted("macro budget exhausted")

    def support(self) -> dict[Cylinder, int]:
        return {c: m for c, m in self.counts.items() if m}

    def _validate_dual(self, name: str, label: Cylinder,
                       products: list[Cylinder]) -> None:
        key = (self.field.minpoly.coeffs, name, label)
        if not self.validate or key in self._validated:
            return
        total = self.field.zero()
        for cyl in products:
            total = total + cyl.value(self.field)
        if total != label.value(self.field):
            raise SumMismatchError(f"{name} products do not sum to {label}")
        _, tree_fn = MACROS[name]
        probe = TraceBuilder(self.field, [label])
        tree_fn(probe, 0)
        if probe.finish().final_multiset() != CylinderMultiset(products):
            raise SumMismatchError(f"{name} tree realization disagrees with its split")
        self._validated.add(key)

    def apply_macro(self, name: str, label: Cylinder, count: int | None = None) -> None:
        self._spend()
        mult = self.counts.get(label, 0) if count is None else count
        if mult == 0:
            return
        products = MACROS[name][0](*label)
        self._validate_dual(name, label, products)
        self.counts[label] -= mult
        if not self.counts[label]:
            del self.counts[label]
        for cyl in products:
            self.counts[cyl] = self.counts.get(cyl, 0) + mult

    def bar_eliminate(self, label: Cylinder) -> None:
        self._spend()
        n = self.field.selmer_n
        a, b = label
        mult = self.counts.pop(label)
        new_label = Cylinder(a + n, b - 1)
        self.counts[new_label] = self.counts.get(new_label, 0) + mult

    def selmer_split(self, label: Cylinder) -> None:
        self._spend()
        n = self.field.selmer_n
        a, _ = label
        mult = self.counts.pop(label)
        for cyl in (Cylinder(a + 1, 0), Cylinder(a + n, 0)):
            self.counts[cyl] = self.counts.get(cyl, 0) + mult

    def result(self) -> tuple[CylinderMultiset, None]:
        return CylinderMultiset(self.counts), None


Workspace = TraceWorkspace | FastWorkspace


# ---------------------------------------------------------------------------
# Selmer canonicalization

def _selmer_bar_eliminate(ws: Workspace) -> None:
    while True:
        barred = [c for c in ws.support() if c.b > 0]
        if not barred:
            return
        for label in sorted(barred, key=Cylinder.sort_key):
            ws.bar_eliminate(label)


def _selmer_finish(ws: Workspace, k: int, n: int) -> None:
    while True:
        low = [c for c in ws.support() if c.a <= k - n]
        if not low:
            return
        ws.selmer_split(min(low, key=Cylinder.sort_key))


def selmer_canonicalize(m: CylinderMultiset, k: int | None,
                        field: AlgebraicField, *, as_tree: bool = True,
                        fuel: int = 10**6, with_trace: bool = True):
    """Canonical window form over r^(k-n+1) .. r^k, with the producing trace.

    With ``with_trace=False`` the counter backend is used and the second
    component of the result is None.
    """
    n = field.selmer_n
    if n is None:
        raise StrategyInapplicable("selmer canonicalization needs a field x^n + x - 1")
    ws: Workspace = (TraceWorkspace(field, m.expand(), as_tree, fuel) if with_trace
                     else FastWorkspace(field, m, fuel))
    _selmer_bar_eliminate(ws)
    max_a = max((c.a for c in ws.support()), default=0)
    if k is None:
        k = max(max_a, n)
    elif k < max_a:
        raise WindowTooSmall(f"k={k} is below the largest exponent {max_a}")
    _selmer_finish(ws, k, n)
    return ws.result()


def selmer_window_independent(field: AlgebraicField, k: int) -> bool:
    """Rank check: the window powers r^(k-n+1) .. r^k are linearly independent."""
    n = field.selmer_n
    if n is None or k - n + 1 < 0:
        return False
    rows = [list(field.cylinder(a, 0).coeffs) for a in range(k - n + 1, k + 1)]
    # Gaussian elimination over Q
    rank = 0
    cols = len(rows[0])
    for col in range(cols):
        pivot = next((i for i in range(rank, len(rows)) if rows[i][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][col] != 0:
                f = rows[i][col] / rows[rank][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[rank])]
        rank += 1
    return rank == n


# ---------------------------------------------------------------------------
# canonicalization for the quartic field of s = r^2

def _require_s_field(field: AlgebraicField) -> None:
    if field.minpoly.coeffs != S_FIELD_COEFFS:
        raise StrategyInapplicable(
            "this move system is specific to the field x^4 - 2x^2 - x + 1")


def _r4s_band_reduce(ws: Workspace) -> None:
    while True:
        high = [c for c in ws.support() if c.a > c.b + 1]
        if not high:
            break
        ws.apply_macro("eqc", min(high, key=Cylinder.sort_key))
    while True:
        low = [c for c in ws.support() if c.a < c.b]
        if not low:
            break
        ws.apply_macro("eqb", min(low, key=Cylinder.sort_key))


def _r4s_finish(ws: Workspace, k: int) -> None:
    # pump everything up to the level of k
    while True:
        diag = [c for c in ws.support() if c.a == c.b and c.b < k - 1]
        if diag:
            ws.apply_macro("eqd", min(diag, key=Cylinder.sort_key))
            continue
        over = [c for c in ws.support() if c.a == c.b + 1 and c.b < k - 2]
        if over:
            ws.apply_macro("eqe", min(over, key=Cylinder.sort_key))
            continue
        break
    # five-to-four cleanup
    while True:
        sup = ws.support()
        if Cylinder(k - 1, k - 2) in sup:
            ws.apply_macro("tsplit", Cylinder(k - 1, k - 2))
        elif Cylinder(k - 1, k - 1) in sup:
            ws.apply_macro("tsplit", Cylinder(k - 1, k - 1))
        elif Cylinder(k, k - 2) in sup:
            ws.apply_macro("eqc", Cylinder(k, k - 2))
        else:
            break
    allowed = {Cylinder(k, k - 1), Cylinder(k - 1, k), Cylinder(k, k),
               Cylinder(k + 1, k)}
    stray = set(ws.support()) - allowed
    if stray:
        raise RefinerError(f"canonicalization left stray sizes {stray}")  # pragma: no cover


def r4s_shared_level(multisets: Iterable[CylinderMultiset],
                     field: AlgebraicField) -> int:
    """The common level k at which all the given multisets can be canonicalized.

    Band reduction can raise exponents well above the inputs, so the usable
    k is only known after reducing; this runs the cheap counter backend.
    """
    _require_s_field(field)
    level = 2
    for m in multisets:
        ws = FastWorkspace(field, m, validate=False)
        _r4s_band_reduce(ws)
        level = max(level, max((c.a for c in ws.support()), default=0))
    return level


def r4s_canonicalize(m: CylinderMultiset, field: AlgebraicField,
                     k: int | None = None, *, as_tree: bool = True,
                     fuel: int = 10**6, with_trace: bool = True):
    """Canonical four-size form in the field of s = r^2 at level k."""
    _require_s_field(field)
    ws: Workspace = (TraceWorkspace(field, m.expand(), as_tree, fuel) if with_trace
                     else FastWorkspace(field, m, fuel))
    _r4s_band_reduce(ws)
    max_a = max((c.a for c in ws.support()), default=0)
    if k is None:
        k = max(max_a, 2)
    elif k < max(max_a, 2):
        raise WindowTooSmall(f"k={k} is below the band-reduced level {max(max_a, 2)}")
    _r4s_finish(ws, k)
    return ws.result()


# ---------------------------------------------------------------------------
# strategies

@dataclass(frozen=True)
class Selmer:
    n: int | None = None  # informational; the field decides

    def name(self) -> str:
        return "selmer"


@dataclass(frozen=True)
class R4Square:
    def name(self) -> str:
        return "r4square"


@dataclass(frozen=True)
class GenericSearch:
    max_depth: int = 8
    fuel: int = 10**6

    def name(self) -> str:
        return "generic"


@dataclass(frozen=True)
class GreedyCarve:
    fuel: int = 10**6

    def name(self) -> str:
        return "carve"


Strategy = Selmer | R4Square | GenericSearch | GreedyCarve


@dataclass
class RefinementCertificate:
    cylinder: Cylinder
    parts: tuple[Cylinder, ...]
    partition: TreePartition
    grouping: dict[str, int]
    witness: RefinementWitness
    trace_a: Trace | None = None
    trace_b: Trace | None = None


def _check_preconditions(field: AlgebraicField, c: Cylinder,
                         parts: Sequence[Cylinder]) -> None:
    total = multiset_sum(CylinderMultiset(parts), field)
    if total != c.value(field):
        raise SumMismatchError(f"parts do not sum to {c}")
    if list(parts) == [c]:
        return
    cval = c.value(field)
    for part in set(parts):
        if field.sign(cval - part.value(field)) <= 0:
            raise StrategyInapplicable(
                f"part {part} is not strictly smaller than {c}")


def _trivial_certificate(field: AlgebraicField, c: Cylinder) -> RefinementCertificate:
    partition = TreePartition([""], root="")
    grouping = {"": 1}
    witness = witness_from_grouping(partition, grouping, [c], field, root_size=c)
    trace_a = TraceBuilder(field, [c]).finish()
    trace_b = TraceBuilder(field, [c]).finish()
    return RefinementCertificate(c, (c,), partition, grouping, witness,
                                 trace_a, trace_b)


def _certificate_from_traces(field: AlgebraicField, c: Cylinder,
                             parts: Sequence[Cylinder], trace_a: Trace,
                             trace_b: Trace) -> RefinementCertificate:
    partition, grouping = extract_refinement(trace_a, trace_b)
    validate_tree_partition(partition)
    witness = witness_from_grouping(partition, grouping, list(parts), field,
                                    root_size=c)
    return RefinementCertificate(c, tuple(parts), partition, grouping, witness,
                                 trace_a, trace_b)


def _certificate_from_grouping(field: AlgebraicField, c: Cylinder,
                               parts: Sequence[Cylinder],
                               partition: TreePartition,
                               grouping: dict[str, int],
                               build_traces: bool = True) -> RefinementCertificate:
    validate_tree_partition(partition)
    witness = witness_from_grouping(partition, grouping, list(parts), field,
                                    root_size=c)
    trace_a = trace_b = None
    if build_traces:
        a = TraceBuilder(field, [c], fuel=4 * len(partition.leaves) + 16)
        addr_items = {"": 0}
        frontier = [""]
        leaf_set = set(partition.leaves)
        while frontier:
            nxt = []
            for bits in frontier:
                if bits in leaf_set:
                    continue
                c1, c0 = a.tree_split(addr_items.pop(bits))
                addr_items[bits + "1"] = c1
                addr_items[bits + "0"] = c0
                nxt += [bits + "1", bits + "0"]
            frontier = nxt
        trace_a = a.finish()
        bld = TraceBuilder(field, parts, fuel=len(partition.leaves) + len(parts) + 16)
        for j in range(1, len(parts) + 1):
            leaves = [leaf for leaf in partition.leaves if grouping[leaf] == j]
            sizes = [Cylinder(c.a + leaf.count("1"), c.b + leaf.count("0"))
                     for leaf in leaves]
            bld.split(j - 1, sizes)
        trace_b = bld.finish()
    return RefinementCertificate(c, tuple(parts), partition, grouping, witness,
                                 trace_a, trace_b)


def refine_partition(field: AlgebraicField, c: Cylinder,
                     parts: Sequence[Cylinder] | CylinderMultiset,
                     strategy: Strategy, fuel: int = 10**6
                     ) -> RefinementCertificate:
    """Refine the partition ``parts`` of the cylinder ``c`` to a tree partition."""
    if isinstance(parts, CylinderMultiset):
        parts = parts.expand()
    parts = list(parts)
    _check_preconditions(field, c, parts)
    if parts == [c]:
        return _trivial_certificate(field, c)

    if isinstance(strategy, Selmer):
        n = field.selmer_n
        if n is None:
            raise StrategyInapplicable("selmer strategy needs a field x^n + x - 1")
        ws_a = TraceWorkspace(field, [c], as_tree=True, fuel=fuel)
        ws_b = TraceWorkspace(field, parts, as_tree=False, fuel=fuel)
        _selmer_bar_eliminate(ws_a)
        _selmer_bar_eliminate(ws_b)
        k = max(max(cc.a for cc in ws_a.support()),
                max(cc.a for cc in ws_b.support()), n)
        _selmer_finish(ws_a, k, n)
        _selmer_finish(ws_b, k, n)
        _, trace_a = ws_a.result()
        _, trace_b = ws_b.result()
        return _certificate_from_traces(field, c, parts, trace_a, trace_b)

    if isinstance(strategy, R4Square):
        _require_s_field(field)
        ws_a = TraceWorkspace(field, [c], as_tree=True, fuel=fuel)
        ws_b = TraceWorkspace(field, parts, as_tree=False, fuel=fuel)
        _r4s_band_reduce(ws_a)
        _r4s_band_reduce(ws_b)
        k = max(max((cc.a for cc in ws_a.support()), default=0),
                max((cc.a for cc in ws_b.support()), default=0), 2)
        _r4s_finish(ws_a, k)
        _r4s_finish(ws_b, k)
        _, trace_a = ws_a.result()
        _, trace_b = ws_b.result()
        return _certificate_from_traces(field, c, parts, trace_a, trace_b)

    if isinstance(strategy, GenericSearch):
        return generic_search(field, c, parts, max_depth=strategy.max_depth,
                              fuel=strategy.fuel)

    if isinstance(strategy, GreedyCarve):
        partition, grouping = _greedy_carve(field, c, parts, fuel=strategy.fuel)
        return _certificate_from_grouping(field, c, parts, partition, grouping)

    raise StrategyInapplicable(f"unknown strategy {strategy!r}")


def refine_with_fallback(field: AlgebraicField, c: Cylinder,
                         parts: Sequence[Cylinder],
                         strategies: Sequence[Strategy],
                         build_traces: bool = True) -> RefinementCertificate:
    """Try strategies in order; the first one to succeed wins."""
    last: Exception | None = None
    for strategy in strategies:
        try:
            if isinstance(strategy, GreedyCarve):
                partition, grouping = _greedy_carve(field, c, parts,
                                                    fuel=strategy.fuel)
                _check_preconditions(field, c, list(parts))
                return _certificate_from_grouping(field, c, parts, partition,
                                                  grouping, build_traces)
            return refine_partition(field, c, parts, strategy)
        except (RefinerError, FuelExhausted) as exc:
            last = exc
    raise last if last is not None else StrategyInapplicable("no strategies given")


# ---------------------------------------------------------------------------
# greedy exact carving

def carve_values(field: AlgebraicField, cap: FieldElement,
                 demands: Sequence[tuple[int, FieldElement]],
                 fuel: int = 10**6, max_depth: int = 48) -> dict[str, int]:
    """Carve the binary tree below a clopen set of measure ``cap`` so that
    each tagged demand value receives clopen pieces of exactly its total size.

    At every node the search first looks for a subset of the pending demands
    that fills the 1-subtree exactly; failing that it tries boundary cuts,
    where one demand is split exactly at the subtree boundary and the rest
    are assigned whole.  Dead ends backtrack, with iterative deepening on the
    carve depth.  Returns leaf address -> demand tag.  Existence of a finite
    carve is not guaranteed for arbitrary values, so depth and fuel guards
    apply.
    """
    totals: dict[int, FieldElement] = {}
    order: list[int] = []
    for j, v in demands:
        if j in totals:
            totals[j] = totals[j] + v
        else:
            totals[j] = v
            order.append(j)
    merged = [(j, totals[j]) for j in order]
    if not merged:
        raise RefinerError("no demands to carve")

    eps = Fraction(1, 2**40)

    def flt(v: FieldElement) -> float:
        return float(field.approximate(v, eps)[0])

    r = field.root()
    q = field.one() - r
    rf = flt(r)
    qf = 1.0 - rf
    state = {"fuel": fuel}
    tol = 1e-9

    class _DepthHit(Exception):
        pass

    # deepest remaining-depth budget already proven infeasible, per demand
    # value multiset (tags are irrelevant to feasibility)
    dead: dict[tuple, int] = {}

    def rec(bits: str, cap_val: FieldElement, cap_flt: float,
            ds: list[tuple[int, FieldElement, float]], leaves: dict[str, int],
            limit: int) -> None:
        state["fuel"] -= 1
        if state["fuel"] < 0:
            raise FuelExhausted("carve budget exhausted")
        if len(ds) == 1:
            leaves[bits] = ds[0][0]
            return
        if len(bits) >= limit:
            raise _DepthHit
        remaining = limit - len(bits)
        key = tuple(sorted(v.coeffs for _, v, _f in ds))
        if dead.get(key, 0) >= remaining:
            raise _DepthHit
        cap1, cap0 = cap_val * r, cap_val * q
        f1 = cap_flt * rf
        f0 = cap_flt * qf
        m = len(ds)
        if m > 20:
            raise FuelExhausted("too many demands for a subset scan")
        sums = [0.0] * (1 << m)
        for i in range(m):
            bit = 1 << i
            vi = ds[i][2]
            for mask in range(bit):
                sums[mask | bit] = sums[mask] + vi
        # exact splits first, then cuts with the fullest whole-demand side
        cuts: list[tuple[float, int, int]] = []
        exacts: list[int] = []
        for mask in range(1, (1 << m) - 1):
            fs = sums[mask]
            if abs(fs - f1) < tol:
                exacts.append(mask)
                continue
            if fs < f1:
                for i in range(m):
                    if not mask & (1 << i) and fs + ds[i][2] > f1 + tol:
                        cuts.append((-fs, mask, i))
        empty_ok = [i for i in range(m) if ds[i][2] > f1 + tol]
        cuts.extend((0.0, 0, i) for i in empty_ok)
        cuts.sort()

        def split(mask: int, cut: int | None):
            side1 = [ds[i] for i in range(m) if mask & (1 << i)]
            side0 = [ds[i] for i in range(m) if not mask & (1 << i)]
            if cut is None:
                total = field.zero()
                for _, v, _f in side1:
                    total = total + v
                if field.sign(total - cap1) != 0:
                    return None
                return side1, side0
            total = field.zero()
            for _, v, _f in side1:
                total = total + v
            frag1 = cap1 - total
            jc, vc, fc = ds[cut]
            frag0 = vc - frag1
            if field.sign(frag1) <= 0 or field.sign(frag0) <= 0:
                return None
            side1.append((jc, frag1, flt(frag1)))
            side0 = [d for d in side0 if d[0] != jc]
            side0.append((jc, frag0, flt(frag0)))
            return side1, side0

        for mask, cut in [(mk, None) for mk in exacts] + \
                         [(mk, i) for _, mk, i in cuts]:
            pair = split(mask, cut)
            if pair is None:
                continue
            side1, side0 = pair
            saved = dict(leaves)
            try:
                rec(bits + "1", cap1, f1, side1, leaves, limit)
                rec(bits + "0", cap0, f0, side0, leaves, limit)
                return
            except _DepthHit:
                leaves.clear()
                leaves.update(saved)
        dead[key] = max(dead.get(key, 0), remaining)
        raise _DepthHit

    ds0 = [(j, v, flt(v)) for j, v in merged]
    limit = 4
    while True:
        limit = min(limit, max_depth)
        leaves: dict[str, int] = {}
        try:
            rec("", cap, flt(cap), ds0, leaves, limit)
            return leaves
        except _DepthHit:
            if limit >= max_depth:
                raise FuelExhausted("carve depth limit reached")
            limit += 4


def merge_pieces(pieces: Counter) -> Counter:
    """Coarsen a multiset of cylinder shapes by undoing tree splits.

    Sibling shapes (a + 1, b) and (a, b + 1) add up to (a, b) exactly, so
    replacing such a pair is value-preserving.  Expansions produced by
    multiplying representations out in full carry huge binomial
    multiplicities; merging collapses them to a few shapes per factor
    structure, which keeps later packing searches small.
    """
    out = Counter({key: cnt for key, cnt in pieces.items() if cnt})
    changed = True
    while changed:
        changed = False
        for a, b in sorted(out, key=lambda ab: (ab[0] + ab[1], ab[0]),
                           reverse=True):
            if a < 1 or not out[(a, b)]:
                continue
            k = min(out[(a, b)], out[(a - 1, b + 1)])
            if k:
                out[(a, b)] -= k
                out[(a - 1, b + 1)] -= k
                out[(a - 1, b)] += k
                changed = True
        out = +out
    return out


def carve_weights(n: int, root_weight: int,
                  pend: list[tuple[int, Counter]]) -> dict[str, int]:
    """Exact tagged carve when every size is a single power of one root.

    For the root r of x^n + x - 1 the cylinder r^a(1-r)^b is the single
    power r^(a+nb), so each tag's demand is a multiset of weights and the
    tree below a node of weight w branches into weights w+1 and w+n.  A
    positive combination of powers that equals r^w uses no weight below w,
    so sweeping the frontier from its largest cell either matches a demand
    weight exactly, splits the cell, or bar-expands the demand units the
    sweep has passed; every step is exact and no backtracking occurs.
    Returns leaf address -> tag.
    """
    def coarsen(counts: Counter) -> Counter:
        out = +counts
        changed = True
        while changed:
            changed = False
            for w in sorted(out):
                k = min(out.get(w + 1, 0), out.get(w + n, 0))
                if k:
                    out[w + 1] -= k
                    out[w + n] -= k
                    out[w] += k
                    changed = True
            out = +out
        return out

    demand: dict[int, Counter] = {}
    for tag, counts in pend:
        if any(c < 0 for c in counts.values()):
            raise RefinerError("negative demand multiplicity")
        if tag in demand:
            demand[tag].update(counts)
        else:
            demand[tag] = +counts
    demand = {tag: coarsen(c) for tag, c in demand.items() if c}
    if not demand:
        raise RefinerError("no demands to carve")
    if any(min(c) < root_weight for c in demand.values()):
        raise RefinerError("demand coarser than the root cylinder")

    # compare exact window coordinates of the total demand and the root;
    # n consecutive powers of the root are rationally independent, so the
    # vectors agree exactly when the values do
    total: Counter = Counter()
    for counts in demand.values():
        total.update(counts)
    top = max(total)

    def window_vec(counts: Counter) -> list[int]:
        lo = top - n + 1
        table = {w: [1 if w == lo + i else 0 for i in range(n)]
                 for w in range(lo, top + 1)}
        for w in range(lo - 1, min(counts) - 1, -1):
            table[w] = [x + y for x, y in zip(table[w + 1], table[w + n])]
        vec = [0] * n
        for w, c in counts.items():
            vec = [x + c * y for x, y in zip(vec, table[w])]
        return vec

    if window_vec(total) != window_vec(Counter({root_weight: 1})):
        raise SumMismatchError("demands do not sum to the root cylinder")

    leaves: dict[str, int] = {}
    frontier: list[tuple[int, str]] = [(root_weight, "")]
    heapq.heapify(frontier)
    while demand:
        if len(demand) == 1:
            tag = next(iter(demand))
            for _, addr in frontier:
                leaves[addr] = tag
            return leaves
        if not frontier:
            raise RefinerError("frontier exhausted before the demands")
        w, addr = heapq.heappop(frontier)
        fits = [tag for tag, c in demand.items() if c.get(w, 0)]
        if fits:
            tag = min(fits)
            leaves[addr] = tag
            demand[tag][w] -= 1
            if not +demand[tag]:
                del demand[tag]
        else:
            # a demand weight below every remaining cell can no longer be
            # met by a single cell; expanding it through r^u = r^(u+1) +
            # r^(u+n) keeps the tag total exact and lets the sweep resume
            expanded = False
            for counts in demand.values():
                for u in [u for u in counts if u < w]:
                    k = counts.pop(u)
                    counts[u + 1] += k
                    counts[u + n] += k
                    expanded = True
            if expanded:
                heapq.heappush(frontier, (w, addr))
            else:
                heapq.heappush(frontier, (w + 1, addr + "1"))
                heapq.heappush(frontier, (w + n, addr + "0"))
    if frontier:
        raise RefinerError("cells left over after all demands were met")
    return leaves


def carve_expansions(field: AlgebraicField, root: Cylinder,
                     items: Sequence[tuple[int, Cylinder, int]],
                     fuel: int = 10**6, max_depth: int = 64) -> dict[str, int]:
    """Pack tagged cylinder-size pieces into a tree partition below ``root``.

    Every piece must dominate the exponents of its node, which is restored
    when needed by rewriting through the field's defining identity (bar
    moves for x^n + x - 1 fields, the four-term splits for the field of
    s = r^2).  At each node an exact subset of the pieces fills the 1-child,
    preferring whole tags; when no exact subset exists, the coarsest piece
    is tree-split and the node retried.  A subtree whose pieces all carry
    one tag becomes a single leaf, which keeps the per-tag address sets
    small and shallow.  Returns leaf address -> tag.
    """
    n = field.selmer_n
    if n is None:
        _require_s_field(field)
    # when 1 - r = r^n every cylinder is a single power of r and the exact
    # frontier sweep always succeeds; the packing search still gets a
    # first, tightly budgeted try on small inputs because it prefers whole
    # tags as single leaves, which keeps later stages coarse
    sweep = None
    if n is not None:
        weighted: dict[int, Counter] = {}
        for tag, cyl, cnt in items:
            if cnt < 0:
                raise RefinerError("negative piece multiplicity")
            acc = weighted.setdefault(tag, Counter())
            acc[cyl.a + n * cyl.b] += cnt
        if not weighted:
            raise RefinerError("no pieces to carve")

        def sweep() -> dict[str, int]:
            return carve_weights(n, root.a + n * root.b,
                                 sorted(weighted.items()))

        if len(weighted) > 8 or len(items) > 24:
            return sweep()
        fuel = min(fuel, 50000)
    rf = field.root_float()
    qf = 1.0 - rf
    state = {"fuel": fuel}

    def spend() -> None:
        state["fuel"] -= 1
        if state["fuel"] < 0:
            raise FuelExhausted("carve budget exhausted")

    def into_cone(pend: Counter, A: int, B: int) -> Counter:
        """Rewrite every piece to dominate (A, B) without changing values.

        With 1 - r = r^n each piece is a single power of r and maps to the
        unique shape with second exponent exactly B.  Otherwise the moves
        raise one exponent at a time; each application makes strict
        progress, so the worklist drains.
        """
        out: Counter = Counter()
        work = list(pend.items())
        while work:
            spend()
            (tag, a, b), cnt = work.pop()
            if n is not None:
                w = a + n * b
                if w < A + n * B:
                    raise RefinerError("piece is coarser than its node")
                out[(tag, w - n * B, B)] += cnt
            elif a < A:
                work.extend(((tag, c.a, c.b), cnt) for c in eqb_products(a, b))
            elif b < B:
                prods = eqc_products(a, b) if a >= 1 else eqb_products(a, b)
                work.extend(((tag, c.a, c.b), cnt) for c in prods)
            else:
                out[(tag, a, b)] += cnt
        return out

    class _SearchOver(Exception):
        pass

    def find_subset(ftypes: list[tuple[tuple[int, int], int]],
                    target: FieldElement, target_f: float,
                    budget: int = 10**9) -> dict | None:
        types = sorted(ftypes, key=lambda t: -(rf ** t[0][0]) * qf ** t[0][1])
        vals_f = [rf ** ab[0] * qf ** ab[1] for ab, _ in types]
        suffix = [0.0] * (len(types) + 1)
        for i in range(len(types) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + vals_f[i] * types[i][1]
        eps = 1e-12 + 1e-9 * abs(target_f)
        chosen: dict[tuple[int, int], int] = {}
        calls = [budget]

        def dfs(i: int, rem: float) -> bool:
            spend()
            calls[0] -= 1
            if calls[0] < 0:
                raise _SearchOver
            if rem < -eps or rem > suffix[i] + eps:
                return False
            if i == len(types):
                if abs(rem) > eps:
                    return False
                total = field.zero()
                for ab, k in chosen.items():
                    if k:
                        total = total + field.element([k]) * field.cylinder(*ab)
                return total == target
            ab, cnt = types[i]
            kmax = min(cnt, int((rem + eps) / vals_f[i]))
            for k in range(kmax, -1, -1):
                chosen[ab] = k
                if dfs(i + 1, rem - k * vals_f[i]):
                    return True
            chosen.pop(ab, None)
            return False

        try:
            return dict(chosen) if dfs(0, target_f) else None
        except _SearchOver:
            return None

    leaves: dict[str, int] = {}

    def rec(bits: str, A: int, B: int, pend: Counter) -> None:
        spend()
        pend = into_cone(pend, A, B)
        tags = {key[0] for key in pend}
        if len(tags) == 1:
            total = field.zero()
            for (_, a, b), cnt in pend.items():
                total = total + field.element([cnt]) * field.cylinder(a, b)
            if total != field.cylinder(A, B):
                raise SumMismatchError("pieces do not sum to their node")
            leaves[bits] = next(iter(tags))
            return
        if len(bits) >= max_depth:
            raise FuelExhausted("carve depth limit reached")
        need = field.cylinder(A + 1, B)
        need_f = rf ** (A + 1) * qf ** B
        rest = field.cylinder(A, B + 1)
        tried_values = False
        # small residues go straight to the exact value carver; greedy
        # packing can chase self-similar remainders down the tree forever
        if len(tags) <= 3 and sum(pend.values()) <= 24:
            tried_values = True
            totals: dict[int, FieldElement] = {}
            for (tag, a, b), cnt in pend.items():
                v = field.element([cnt]) * field.cylinder(a, b)
                totals[tag] = totals.get(tag, field.zero()) + v
            try:
                sub = carve_values(field, field.cylinder(A, B),
                                   sorted(totals.items()),
                                   fuel=max(state["fuel"], 1))
            except (RefinerError, FuelExhausted):
                pass
            else:
                for sub_bits, tag in sub.items():
                    leaves[bits + sub_bits] = tag
                return
        for _attempt in range(64):
            totals: dict[int, FieldElement] = {t: field.zero() for t in tags}
            totals_f: dict[int, float] = {t: 0.0 for t in tags}
            for (tag, a, b), cnt in pend.items():
                totals[tag] = totals[tag] + (field.element([cnt])
                                             * field.cylinder(a, b))
                totals_f[tag] += cnt * rf ** a * qf ** b
            pick = None
            # fast path: a whole tag already matches one child exactly
            for t in sorted(tags):
                if totals[t] == need:
                    pick = Counter({key: cnt for key, cnt in pend.items()
                                    if key[0] == t})
                    break
                if totals[t] == rest:
                    pick = Counter({key: cnt for key, cnt in pend.items()
                                    if key[0] != t})
                    break
            if pick is None:
                # fill the 1-child with a run of whole tags plus an exact
                # subset of one boundary tag, keeping tags contiguous
                orders = [sorted(tags), sorted(tags, reverse=True),
                          sorted(tags, key=lambda t: -totals_f[t])]
                for order in orders:
                    prefix = field.zero()
                    prefix_f = 0.0
                    done: list[int] = []
                    for t in order:
                        gap_f = need_f - prefix_f
                        slack = 1e-12 + 1e-9 * need_f
                        if -slack <= gap_f <= totals_f[t] + slack:
                            btypes: dict[tuple[int, int], int] = {}
                            for (tag, a, b), cnt in pend.items():
                                if tag == t:
                                    ab = (a, b)
                                    btypes[ab] = btypes.get(ab, 0) + cnt
                            counts = find_subset(list(btypes.items()),
                                                 need - prefix, gap_f,
                                                 budget=4000)
                            if counts is not None:
                                pick = Counter({key: cnt
                                                for key, cnt in pend.items()
                                                if key[0] in done})
                                for (a, b), want in counts.items():
                                    if want:
                                        pick[(t, a, b)] += want
                                break
                        prefix = prefix + totals[t]
                        prefix_f += totals_f[t]
                        done.append(t)
                        if prefix_f > need_f + slack:
                            break
                    if pick is not None:
                        break
            if pick is None:
                ftypes: dict[tuple[int, int], int] = {}
                for (tag, a, b), cnt in pend.items():
                    ftypes[(a, b)] = ftypes.get((a, b), 0) + cnt
                counts = find_subset(list(ftypes.items()), need, need_f,
                                     budget=50000)
                if counts is not None:
                    pick = Counter()
                    for ab, want in counts.items():
                        if not want:
                            continue
                        # draw from the tag holding the most of this shape
                        # so that sides lose whole tags where possible
                        keys = sorted((k for k in pend if (k[1], k[2]) == ab),
                                      key=lambda k: -pend[k])
                        for key in keys:
                            if not want:
                                break
                            take = min(pend[key] - pick[key], want)
                            pick[key] += take
                            want -= take
            if pick is not None:
                side0 = Counter(pend)
                side0.subtract(pick)
                side0 = +side0
                rec(bits + "1", A + 1, B, pick)
                rec(bits + "0", A, B + 1, side0)
                return
            # subset packing is stuck; tag totals do not change under
            # splits, so hand the whole node to the value carver once
            if not tried_values and len(tags) <= 6:
                tried_values = True
                totals: dict[int, FieldElement] = {}
                for (tag, a, b), cnt in pend.items():
                    v = field.element([cnt]) * field.cylinder(a, b)
                    totals[tag] = totals.get(tag, field.zero()) + v
                try:
                    sub = carve_values(field, field.cylinder(A, B),
                                       sorted(totals.items()),
                                       fuel=max(state["fuel"], 1))
                except (RefinerError, FuelExhausted):
                    pass
                else:
                    for sub_bits, tag in sub.items():
                        leaves[bits + sub_bits] = tag
                    return
            # no exact fill at this granularity: split the coarsest piece
            coarse = max(pend, key=lambda key: rf ** key[1] * qf ** key[2])
            pend = Counter(pend)
            pend[coarse] -= 1
            if not pend[coarse]:
                del pend[coarse]
            for c in tsplit_products(coarse[1], coarse[2]):
                pend[(coarse[0], c.a, c.b)] += 1
        raise FuelExhausted("carve stalled: no exact fill after refining")

    pend0: Counter = Counter()
    for tag, cyl, cnt in items:
        if cnt < 0:
            raise RefinerError("negative piece multiplicity")
        if cnt:
            pend0[(tag, cyl.a, cyl.b)] += cnt
    if not pend0:
        raise RefinerError("no pieces to carve")
    try:
        rec("", root.a, root.b, pend0)
    except FuelExhausted:
        if sweep is None:
            raise
        leaves.clear()
        return sweep()
    return leaves


def _greedy_carve(field: AlgebraicField, c: Cylinder,
                  parts: Sequence[Cylinder], fuel: int = 10**6
                  ) -> tuple[TreePartition, dict[str, int]]:
    """Carve the binary tree below c so each part receives its exact size."""
    total = multiset_sum(CylinderMultiset(parts), field)
    if total != c.value(field):
        raise SumMismatchError(f"parts do not sum to {c}")
    # Lay parts out in depth-first tree order of the left-packed address
    # 1^a 0^b, so cuts tend to land exactly on subtree boundaries.
    order = sorted(range(len(parts)),
                   key=lambda j: (0,) * parts[j].a + (1,) * parts[j].b)
    demands = [(j + 1, parts[j].value(field)) for j in order]
    leaves = carve_values(field, c.value(field), demands, fuel=fuel)
    partition = TreePartition(leaves.keys(), root="")
    return partition, dict(leaves)


# ---------------------------------------------------------------------------
# bounded generic search

class _Sizer:
    """Float approximations of cylinder values for search ordering."""

    def __init__(self, field: AlgebraicField):
        self.field = field
        rf = field.root_float()
        self.rf, self.qf = rf, 1.0 - rf

    def flt(self, cyl: Cylinder) -> float:
        return (self.rf ** cyl.a) * (self.qf ** cyl.b)


def _tree_shapes(leaf_count: int, max_depth: int):
    """All tree partitions of the root with the given leaf count, as leaf tuples."""
    if leaf_count == 1:
        yield ("",)
        return
    if max_depth == 0:
        return
    for left_count in range(1, leaf_count):
        for left in _tree_shapes(left_count, max_depth - 1):
            for right in _tree_shapes(leaf_count - left_count, max_depth - 1):
                yield tuple("1" + a for a in left) + tuple("0" + a for a in right)


def _find_grouping(field: AlgebraicField, c: Cylinder, leaves: Sequence[str],
                   parts: Sequence[Cylinder], state: dict) -> dict[str, int] | None:
    """Exact multi-subset-sum: assign leaves to parts, largest leaf first."""
    sizer = _Sizer(field)
    order = sorted(leaves, key=lambda a: (-sizer.flt(
        Cylinder(c.a + a.count("1"), c.b + a.count("0"))), a))
    remaining = [p.value(field) for p in parts]
    fremaining = [sizer.flt(p) for p in parts]
    assignment: dict[str, int] = {}

    def go(idx: int) -> bool:
        state["fuel"] -= 1
        if state["fuel"] < 0:
            raise FuelExhausted("generic search budget exhausted")
        if idx == len(order):
            return all(r.is_zero() for r in remaining)
        leaf = order[idx]
        size = Cylinder(c.a + leaf.count("1"), c.b + leaf.count("0"))
        val = size.value(field)
        fval = sizer.flt(size)
        tried: set[tuple[Fraction, ...]] = set()
        for j in range(len(parts)):
            key = remaining[j].coeffs
            if key in tried:
                continue
            tried.add(key)
            if fremaining[j] < fval - 1e-9 * max(fval, 1e-300):
                continue
            if field.sign(remaining[j] - val) < 0:
                continue
            remaining[j] = remaining[j] - val
            fremaining[j] -= fval
            assignment[leaf] = j + 1
            if go(idx + 1):
                return True
            remaining[j] = remaining[j] + val
            fremaining[j] += fval
            del assignment[leaf]
        return False

    return dict(assignment) if go(0) else None


def generic_search(field: AlgebraicField, c: Cylinder,
                   parts: Sequence[Cylinder] | CylinderMultiset,
                   max_depth: int = 8, fuel: int = 10**6
                   ) -> RefinementCertificate:
    """Breadth-first search for a refining tree partition, smallest first."""
    if isinstance(parts, CylinderMultiset):
        parts = parts.expand()
    parts = list(parts)
    _check_preconditions(field, c, parts)
    if parts == [c]:
        return _trivial_certificate(field, c)
    state = {"fuel": fuel}
    for leaf_count in range(len(parts), 2 ** max_depth + 1):
        for leaves in _tree_shapes(leaf_count, max_depth):
            state["fuel"] -= 1
            if state["fuel"] < 0:
                raise NotFoundWithinBounds((max_depth, fuel))
            try:
                grouping = _find_grouping(field, c, leaves, parts, state)
            except FuelExhausted:
                raise NotFoundWithinBounds((max_depth, fuel)) from None
            if grouping is not None:
                partition = TreePartition(leaves, root="")
                return _certificate_from_grouping(field, c, parts, partition,
                                                  grouping)
    raise NotFoundWithinBounds((max_depth, fuel))


# ---------------------------------------------------------------------------
# rational obstruction checker

@dataclass
class RationalCheckResult:
    refined: bool
    depth: int
    partition: TreePartition | None = None
    grouping: dict[str, int] | None = None

    @property
    def refutation(self) -> bool:
        return not self.refined


def check_rational_obstruction(ratio: Fraction, parts: Sequence[Fraction],
                               depth: int, fuel: int = 10**7
                               ) -> RationalCheckResult:
    """Exhaustive bounded search for a tree refinement over a rational r = p/q.

    For r = 1/3 the two-adic parity invariant is used as an exact pruning
    rule: a tree partition has exactly one all-ones leaf, hence exactly one
    leaf value with odd numerator over the common denominator 3^depth, so at
    most one part can absorb an odd-numerator demand.
    """
    ratio = Fraction(ratio)
    if not (0 < ratio < 1) or ratio.denominator <= 1:
        raise ValueError("need a rational strictly between 0 and 1 with q > 1")
    if depth > 16:
        raise DepthTooLarge("enumeration capped at depth 16")
    demands = [ratio ** p.a * (1 - ratio) ** p.b if isinstance(p, Cylinder)
               else Fraction(p) for p in parts]
    if sum(demands) != 1:
        raise SumMismatchError("parts must partition 1")
    one_minus = 1 - ratio
    is_third = ratio == Fraction(1, 3)
    state = {"fuel": fuel}
    found: dict[str, int] = {}

    def odd_demands(ds: Sequence[Fraction]) -> int:
        return sum(1 for d in ds if d != 0 and d.numerator % 2 == 1)

    def go(stack: list[tuple[str, Fraction, int, int]],
           ds: tuple[Fraction, ...]) -> bool:
        state["fuel"] -= 1
        if state["fuel"] < 0:
            raise FuelExhausted("obstruction search budget exhausted")
        if not stack:
            return all(d == 0 for d in ds)
        if is_third:
            # every pending all-ones subtree yields exactly one odd-numerator
            # leaf, so the counts must agree in size and in parity
            odd = odd_demands(ds)
            pend = sum(1 for e in stack if e[3] == 0)
            if odd > pend or (odd - pend) % 2:
                return False
        # smallest reachable piece: any positive demand must fit at least one
        min_piece = min(v * min(ratio, one_minus) ** dl for _, v, dl, _ in stack)
        if any(0 < d < min_piece for d in ds):
            return False
        bits, v, depth_left, zeros = stack[-1]
        rest = stack[:-1]
        tried: set[Fraction] = set()
        for j, d in enumerate(ds):
            if d in tried or d < v:
                continue
            tried.add(d)
            nds = tuple(dd - v if i == j else dd for i, dd in enumerate(ds))
            if go(rest, nds):
                found[bits] = j + 1
                return True
        if depth_left > 0:
            child1 = (bits + "1", v * ratio, depth_left - 1, zeros)
            child0 = (bits + "0", v * one_minus, depth_left - 1, zeros + 1)
            if go(rest + [child0, child1], ds):
                return True
        return False

    refined = go([("", Fraction(1), depth, 0)], tuple(demands))
    if refined:
        partition = TreePartition(found.keys(), root="")
        validate_tree_partition(partition)
        return RationalCheckResult(True, depth, partition, dict(found))
    return RationalCheckResult(False, depth)


# ---------------------------------------------------------------------------
# certificate serialization and independent verification

def certificate_to_json(cert: RefinementCertificate,
                        field: AlgebraicField) -> dict:
    lo, hi = field.root_interval
    if lo == hi:
        # an exactly rational root collapses the isolating interval; reopen it
        pad = Fraction(1, 2**30)
        lo, hi = max(Fraction(0), lo - pad), min(Fraction(1), hi + pad)
    data = {
        "field": {"minpoly": format_polynomial(field.minpoly.coeffs),
                  "interval": [str(lo), str(hi)]},
        "cylinder": {"a": cert.cylinder.a, "b": cert.cylinder.b},
        "parts": [{"a": p.a, "b": p.b} for p in cert.parts],
        "partition": cert.partition.to_json(),
        "grouping": dict(sorted(cert.grouping.items())),
        "witness": cert.witness.to_json(),
        "trace_a": cert.trace_a.to_json() if cert.trace_a is not None else None,
        "trace_b": cert.trace_b.to_json() if cert.trace_b is not None else None,
    }
    return data


def certificate_dumps(cert: RefinementCertificate, field: AlgebraicField) -> str:
    import json
    return json.dumps(certificate_to_json(cert, field), sort_keys=True,
                      separators=(",", ":"))


def certificate_from_json(data: dict) -> tuple[RefinementCertificate, AlgebraicField]:
    from cantorkit.numberfield import make_field
    fd = data["field"]
    field = make_field(fd["minpoly"],
                       (Fraction(fd["interval"][0]), Fraction(fd["interval"][1])))
    c = Cylinder(data["cylinder"]["a"], data["cylinder"]["b"])
    parts = tuple(Cylinder(p["a"], p["b"]) for p in data["parts"])
    partition = TreePartition.from_json(data["partition"])
    grouping = {k: int(v) for k, v in data["grouping"].items()}
    witness = RefinementWitness.from_json(data["witness"])
    trace_a = (Trace.from_json(data["trace_a"], field)
               if data.get("trace_a") is not None else None)
    trace_b = (Trace.from_json(data["trace_b"], field)
               if data.get("trace_b") is not None else None)
    return RefinementCertificate(c, parts, partition, grouping, witness,
                                 trace_a, trace_b), field


class CertificateInvalid(RefinerError):
    pass


def verify_certificate(data: dict) -> None:
    """Re-check a serialized certificate from scratch.

    This only replays and sums; it never runs any strategy.  Raises
    CertificateInvalid (or a more specific validation error) on any defect.
    """
    cert, field = certificate_from_json(data)
    validate_tree_partition(cert.partition)
    if cert.partition.root != "":
        raise CertificateInvalid("partition must be rooted at the empty address")
    if set(cert.grouping) != set(cert.partition.leaves):
        raise CertificateInvalid("grouping does not cover the partition leaves")
    if set(cert.grouping.values()) - set(range(1, len(cert.parts) + 1)):
        raise CertificateInvalid("grouping uses an out-of-range part index")
    total = multiset_sum(CylinderMultiset(cert.parts), field)
    if total != cert.cylinder.value(field):
        raise CertificateInvalid("parts do not sum to the cylinder")
    # each part's leaves must sum exactly to the part's size
    for j, part in enumerate(cert.parts, start=1):
        acc = field.zero()
        for leaf in cert.partition.leaves:
            if cert.grouping[leaf] == j:
                acc = acc + Cylinder(cert.cylinder.a + leaf.count("1"),
                                     cert.cylinder.b + leaf.count("0")).value(field)
        if acc != part.value(field):
            raise CertificateInvalid(f"leaves of part {j} do not sum to {part}")
    # the witness must agree with an independent recount
    recount = witness_from_grouping(cert.partition, cert.grouping,
                                    list(cert.parts), field,
                                    root_size=cert.cylinder)
    if recount != cert.witness:
        raise CertificateInvalid("witness disagrees with its recount")
    for trace, start in ((cert.trace_a, CylinderMultiset([cert.cylinder])),
                         (cert.trace_b, CylinderMultiset(cert.parts))):
        if trace is None:
            continue
        trace.replay()  # validates every move
        if trace.initial_multiset() != start:
            raise CertificateInvalid("trace starts from the wrong multiset")
    if cert.trace_a is not None and cert.trace_b is not None:
        if cert.trace_a.final_multiset() != cert.trace_b.final_multiset():
            raise CertificateInvalid("trace final multisets disagree")


def all_ones_leaf_count(partition: TreePartition) -> int:
    """Number of leaves with b = 0, i.e. all-ones addresses below the root."""
    return sum(1 for leaf in partition.leaves
               if set(leaf[len(partition.root):]) <= {"1"})
