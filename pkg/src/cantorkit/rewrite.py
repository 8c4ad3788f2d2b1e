"""The move calculus: tree splits, merges, arbitrary splits, Selmer rewrites.

Every multiset element carries a fresh integer id so that merges and splits
record parent/child relations; this is what makes a pair of traces
composable into a tree partition refining a given partition.  All moves are
validated by exact field arithmetic at application time, so a trace that
exists is already sum-preserving move by move.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from cantorkit.cylinder import Cylinder, CylinderMultiset, TreePartition
from cantorkit.numberfield import AlgebraicField, FieldElement


class RewriteError(Exception):
    pass


class UnknownItem(RewriteError):
    pass


class SumMismatch(RewriteError):
    pass


class NotSelmerFieldError(RewriteError):
    pass


class FinalMultisetMismatch(RewriteError):
    pass


class NonTreeMoveInA(RewriteError):
    pass


class FuelExhausted(RewriteError):
    pass


@dataclass(frozen=True)
class TreeSplit:
    item: int
    child1: int  # the r-branch, exponent (a+1, b)
    child0: int  # the (1-r)-branch, exponent (a, b+1)

    def to_json(self) -> dict:
        return {"kind": "tree_split", "item": self.item,
                "child1": self.child1, "child0": self.child0}


@dataclass(frozen=True)
class Merge:
    items: tuple[int, ...]
    result: int
    label: Cylinder | None
    value_coeffs: tuple[Fraction, ...]  # exact merged value in the ambient field

    def to_json(self) -> dict:
        return {"kind": "merge", "items": list(self.items), "result": self.result,
                "label": list(self.label) if self.label is not None else None,
                "value": [str(c) for c in self.value_coeffs]}


@dataclass(frozen=True)
class Split:
    item: int
    products: tuple[Cylinder, ...]
    product_ids: tuple[int, ...]

    def to_json(self) -> dict:
        return {"kind": "split", "item": self.item,
                "products": [list(c) for c in self.products],
                "product_ids": list(self.product_ids)}


@dataclass(frozen=True)
class Rewrite:
    """Relabel (a, b+1) <-> (a+n, b) in a Selmer field; value is unchanged."""

    item: int
    new_label: Cylinder

    def to_json(self) -> dict:
        return {"kind": "rewrite", "item": self.item, "new_label": list(self.new_label)}


Move = TreeSplit | Merge | Split | Rewrite


def move_from_json(data: dict) -> Move:
    kind = data["kind"]
    if kind == "tree_split":
        return TreeSplit(data["item"], data["child1"], data["child0"])
    if kind == "merge":
        label = Cylinder(*data["label"]) if data["label"] is not None else None
        return Merge(tuple(data["items"]), data["result"], label,
                     tuple(Fraction(c) for c in data["value"]))
    if kind == "split":
        return Split(data["item"], tuple(Cylinder(*c) for c in data["products"]),
                     tuple(data["product_ids"]))
    if kind == "rewrite":
        return Rewrite(data["item"], Cylinder(*data["new_label"]))
    raise ValueError(f"unknown move kind {kind!r}")


class Item:
    __slots__ = ("label", "value")

    def __init__(self, label: Cylinder, value: FieldElement):
        self.label = label
        self.value = value


def _apply(items: dict[int, Item], move: Move, field: AlgebraicField) -> None:
    """Apply one validated move in place."""
    if isinstance(move, TreeSplit):
        it = items.pop(move.item, None)
        if it is None:
            raise UnknownItem(f"item {move.item}")
        a, b = it.label
        items[move.child1] = Item(Cylinder(a + 1, b), it.value * field.root())
        items[move.child0] = Item(Cylinder(a, b + 1), it.value * (field.one() - field.root()))
    elif isinstance(move, Merge):
        total = field.zero()
        for i in move.items:
            it = items.pop(i, None)
            if it is None:
                raise UnknownItem(f"item {i}")
            total = total + it.value
        if total.coeffs != move.value_coeffs:
            raise SumMismatch("merge value does not equal the sum of merged items")
        if move.label is not None and total != move.label.value(field):
            raise SumMismatch("merge label does not match the merged value")
        items[move.result] = Item(move.label if move.label is not None
                                  else Cylinder(0, 0), total)
        if move.label is None:
            # unlabeled merges keep the exact value; label is a placeholder
            items[move.result].label = None  # type: ignore[assignment]
    elif isinstance(move, Split):
        it = items.pop(move.item, None)
        if it is None:
            raise UnknownItem(f"item {move.item}")
        total = field.zero()
        for cyl in move.products:
            total = total + cyl.value(field)
        if total != it.value:
            raise SumMismatch("split products do not sum to the split item")
        if len(move.products) != len(move.product_ids):
            raise RewriteError("split products and ids disagree in length")
        for cyl, pid in zip(move.products, move.product_ids):
            items[pid] = Item(cyl, cyl.value(field))
    elif isinstance(move, Rewrite):
        n = field.selmer_n
        if n is None:
            raise NotSelmerFieldError("rewrite moves need a field with 1 - r = r^n")
        it = items.get(move.item)
        if it is None:
            raise UnknownItem(f"item {move.item}")
        a, b = it.label
        na, nb = move.new_label
        ok = (na, nb) == (a + n, b - 1) or (na, nb) == (a - n, b + 1)
        if not ok:
            raise SumMismatch("rewrite must exchange (a, b+1) with (a+n, b)")
        it.label = move.new_label
    else:
        raise RewriteError(f"unknown move {move!r}")


class Trace:
    """An initial labeled multiset, a validated move list, and the final state."""

    def __init__(self, field: AlgebraicField, initial: Sequence[tuple[int, Cylinder]],
                 moves: Sequence[Move]):
        self.field = field
        self.initial = tuple(initial)
        self.moves = tuple(moves)
        self.final_items = self.replay()

    def replay(self) -> dict[int, Item]:
        """Re-apply every move from the initial multiset, validating each."""
        items = {i: Item(cyl, cyl.value(self.field)) for i, cyl in self.initial}
        if len(items) != len(self.initial):
            raise RewriteError("duplicate ids in initial multiset")
        for move in self.moves:
            _apply(items, move, self.field)
        return items

    def initial_multiset(self) -> CylinderMultiset:
        return CylinderMultiset(cyl for _, cyl in self.initial)

    def final_multiset(self) -> CylinderMultiset:
        labels = []
        for it in self.final_items.values():
            if it.label is None:
                raise RewriteError("final multiset contains an unlabeled merge result")
            labels.append(it.label)
        return CylinderMultiset(labels)

    def total(self) -> FieldElement:
        acc = self.field.zero()
        for it in self.final_items.values():
            acc = acc + it.value
        return acc

    def to_json(self) -> dict:
        return {"initial": [{"id": i, "a": c.a, "b": c.b} for i, c in self.initial],
                "moves": [m.to_json() for m in self.moves]}

    @classmethod
    def from_json(cls, data: dict, field: AlgebraicField) -> "Trace":
        initial = [(d["id"], Cylinder(d["a"], d["b"])) for d in data["initial"]]
        return cls(field, initial, [move_from_json(m) for m in data["moves"]])


class TraceBuilder:
    """Mutable construction site for a trace; every append is validated."""

    def __init__(self, field: AlgebraicField, initial: Iterable[Cylinder],
                 fuel: int = 10**6):
        self.field = field
        self._next = 0
        self.initial: list[tuple[int, Cylinder]] = []
        self.items: dict[int, Item] = {}
        for cyl in initial:
            i = self.fresh()
            self.initial.append((i, cyl))
            self.items[i] = Item(cyl, cyl.value(field))
        self.moves: list[Move] = []
        self.fuel = fuel

    def fresh(self) -> int:
        i = self._next
        self._next += 1
        return i

    def _spend(self) -> None:
        self.fuel -= 1
        if self.fuel < 0:
            raise FuelExhausted("move budget exhausted")

    def label_of(self, item: int) -> Cylinder:
        return self.items[item].label

    def live_ids(self) -> list[int]:
        return list(self.items)

    def tree_split(self, item: int) -> tuple[int, int]:
        self._spend()
        move = TreeSplit(item, self.fresh(), self.fresh())
        _apply(self.items, move, self.field)
        self.moves.append(move)
        return move.child1, move.child0

    def merge(self, ids: Sequence[int], label: Cylinder | None) -> int:
        self._spend()
        total = self.field.zero()
        for i in ids:
            if i not in self.items:
                raise UnknownItem(f"item {i}")
            total = total + self.items[i].value
        move = Merge(tuple(ids), self.fresh(), label, total.coeffs)
        _apply(self.items, move, self.field)
        self.moves.append(move)
        return move.result

    def split(self, item: int, products: Sequence[Cylinder]) -> list[int]:
        self._spend()
        move = Split(item, tuple(products), tuple(self.fresh() for _ in products))
        _apply(self.items, move, self.field)
        self.moves.append(move)
        return list(move.product_ids)

    def rewrite(self, item: int, new_label: Cylinder) -> int:
        self._spend()
        move = Rewrite(item, new_label)
        _apply(self.items, move, self.field)
        self.moves.append(move)
        return item

    def finish(self) -> Trace:
        return Trace(self.field, self.initial, self.moves)


def apply_move(trace: Trace, move: Move) -> Trace:
    """Functional one-move extension of a trace."""
    return Trace(trace.field, trace.initial, list(trace.moves) + [move])


def realize_power_split(builder: TraceBuilder, item: int, as_tree: bool) -> list[int]:
    """Replace r^a by r^(a+1), r^(a+n) in a Selmer field.

    Tree realization: split r^a into r^(a+1) and r^a(1-r), then rewrite the
    latter to r^(a+n).  Split realization: a single two-product split.
    """
    n = builder.field.selmer_n
    if n is None:
        raise NotSelmerFieldError("power splits need a Selmer field x^n + x - 1")
    a, b = builder.label_of(item)
    if b != 0:
        raise RewriteError("power splits act on pure powers r^a")
    if as_tree:
        child1, child0 = builder.tree_split(item)
        builder.rewrite(child0, Cylinder(a + n, 0))
        return [child1, child0]
    return builder.split(item, [Cylinder(a + 1, 0), Cylinder(a + n, 0)])


# ---------------------------------------------------------------------------
# address-set replay: the engine behind normalization and extraction

class _AddrState:
    """Replay of a tree-move trace where each item is a set of addresses.

    The commuting rule (a merge then a tree split equals child splits then
    merges) is exactly the statement that splitting a merged item splits all
    of its member addresses, so this replay computes the normalized form of
    the trace without rewriting it move by move.
    """

    def __init__(self, trace: Trace):
        self.trace = trace
        self.roots: dict[int, str] = {}
        cells: dict[int, frozenset[tuple[int, str]]] = {}
        for idx, (i, _) in enumerate(trace.initial):
            self.roots[i] = str(idx)
            cells[i] = frozenset({(idx, "")})
        for move in trace.moves:
            if isinstance(move, TreeSplit):
                cell = cells.pop(move.item)
                cells[move.child1] = frozenset((k, bits + "1") for k, bits in cell)
                cells[move.child0] = frozenset((k, bits + "0") for k, bits in cell)
            elif isinstance(move, Merge):
                merged: set[tuple[int, str]] = set()
                for i in move.items:
                    merged |= cells.pop(i)
                cells[move.result] = frozenset(merged)
            elif isinstance(move, Rewrite):
                pass  # same clopen set, relabeled size
            else:
                raise NonTreeMoveInA(f"{type(move).__name__} is not a tree move")
        self.cells = cells  # final item id -> set of (initial index, bits)


def normalize_trace(trace: Trace) -> Trace:
    """Equivalent trace with every tree split before every merge.

    Initial and final labeled multisets are preserved exactly.  A rewrite is
    absorbed: a final item whose address-derived label differs from its
    recorded label is reconciled by a (possibly singleton) merge carrying the
    recorded label.
    """
    state = _AddrState(trace)
    builder = TraceBuilder(trace.field, [cyl for _, cyl in trace.initial],
                           fuel=max(10**6, len(trace.moves) * 16))
    # map (initial index, bits) -> current item id, growing as we split
    addr_items: dict[tuple[int, str], int] = {
        (idx, ""): builder.initial[idx][0] for idx in range(len(trace.initial))}
    all_leaves = sorted({addr for cell in state.cells.values() for addr in cell})
    leaf_set = set(all_leaves)
    # emit splits in breadth-first order per initial item
    frontier = [(idx, "") for idx in range(len(trace.initial))]
    while frontier:
        nxt = []
        for key in frontier:
            if key in leaf_set:
                continue
            c1, c0 = builder.tree_split(addr_items.pop(key))
            idx, bits = key
            addr_items[(idx, bits + "1")] = c1
            addr_items[(idx, bits + "0")] = c0
            nxt.extend([(idx, bits + "1"), (idx, bits + "0")])
        frontier = nxt
    # emit merges reproducing the final labeled multiset
    final_ids = sorted(state.cells, key=lambda i: (
        trace.final_items[i].label.sort_key(), i))
    for fid in final_ids:
        cell = sorted(state.cells[fid])
        label = trace.final_items[fid].label
        ids = [addr_items[key] for key in cell]
        if len(ids) == 1 and builder.label_of(ids[0]) == label:
            continue
        builder.merge(ids, label)
    normalized = builder.finish()
    if normalized.final_multiset() != trace.final_multiset():
        raise RewriteError("normalization changed the final multiset")  # pragma: no cover
    return normalized


def extract_refinement(trace_a: Trace, trace_b: Trace
                       ) -> tuple[TreePartition, dict[str, int]]:
    """Compose a tree-move trace from {c} with a split trace from B.

    Returns the tree partition of c cut out by the split prefix of the
    normalized ``trace_a``, together with a grouping of its leaves by the
    1-based part indices of ``trace_b``'s initial multiset, such that each
    part's leaves sum exactly to the part's size.
    """
    if len(trace_a.initial) != 1:
        raise RewriteError("trace A must start from a single cylinder")
    if trace_a.final_multiset() != trace_b.final_multiset():
        raise FinalMultisetMismatch(
            f"{trace_a.final_multiset()!r} != {trace_b.final_multiset()!r}")
    state = _AddrState(trace_a)  # raises NonTreeMoveInA on splits

    # ancestry of trace B: every item descends from exactly one initial part
    part_of: dict[int, int] = {i: j + 1 for j, (i, _) in enumerate(trace_b.initial)}
    for move in trace_b.moves:
        if isinstance(move, Split):
            src = part_of[move.item]
            for pid in move.product_ids:
                part_of[pid] = src
        elif isinstance(move, Rewrite):
            pass
        elif isinstance(move, TreeSplit):
            # a tree split is in particular a split
            src = part_of[move.item]
            part_of[move.child1] = src
            part_of[move.child0] = src
        else:
            raise RewriteError("trace B may contain only splits and rewrites")

    def canon(items: dict[int, Item]) -> list[int]:
        return sorted(items, key=lambda i: (items[i].label.sort_key(), i))

    a_final = canon(trace_a.final_items)
    b_final = canon(trace_b.final_items)
    grouping: dict[str, int] = {}
    for ia, ib in zip(a_final, b_final):
        if trace_a.final_items[ia].label != trace_b.final_items[ib].label:
            raise FinalMultisetMismatch("canonical final orders disagree")
        for _, bits in state.cells[ia]:
            grouping[bits] = part_of[ib]
    partition = TreePartition(grouping.keys(), root="")
    return partition, grouping
