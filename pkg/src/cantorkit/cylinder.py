"""Cylinder sizes, multisets, binary-tree addresses, and tree partitions.

Addresses are strings over "0"/"1"; bit 1 is the r-branch and bit 0 the
(1-r)-branch, so an address with a ones and b zeros names a cylinder of
measure r^a (1-r)^b.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb
from typing import Iterable, Mapping, Sequence

from cantorkit.numberfield import AlgebraicField, FieldElement


class CylinderError(Exception):
    pass


class NotADescendant(CylinderError):
    pass


class PrefixViolation(CylinderError):
    def __init__(self, addr1: str, addr2: str):
        super().__init__(f"address {addr1!r} is a prefix of {addr2!r}")
        self.addr1, self.addr2 = addr1, addr2


class IncompletenessGap(CylinderError):
    pass


class RowSumMismatch(CylinderError):
    pass


class PartSumMismatch(CylinderError):
    def __init__(self, j: int, message: str = ""):
        super().__init__(message or f"declared size of part {j} does not match grouped sum")
        self.part = j


class Cylinder(tuple):
    """Exponent pair (a, b) denoting the size r^a (1-r)^b."""

    __slots__ = ()

    def __new__(cls, a: int, b: int):
        if a < 0 or b < 0:
            raise ValueError("cylinder exponents must be nonnegative")
        return tuple.__new__(cls, (int(a), int(b)))

    @property
    def a(self) -> int:
        return self[0]

    @property
    def b(self) -> int:
        return self[1]

    @property
    def depth(self) -> int:
        return self[0] + self[1]

    def sort_key(self) -> tuple[int, int]:
        # canonical multiset order: by total length, then r-exponent
        return (self[0] + self[1], self[0])

    def value(self, field: AlgebraicField) -> FieldElement:
        return field.cylinder(self[0], self[1])

    def split(self) -> tuple["Cylinder", "Cylinder"]:
        return Cylinder(self[0] + 1, self[1]), Cylinder(self[0], self[1] + 1)

    def __repr__(self) -> str:
        return f"Cylinder({self[0]}, {self[1]})"


class CylinderMultiset:
    """Finite multiset of cylinders, kept in canonical (depth, a) order."""

    __slots__ = ("entries",)

    def __init__(self, entries: Mapping[Cylinder, int] | Iterable = ()):
        acc: dict[Cylinder, int] = {}
        items = entries.items() if isinstance(entries, Mapping) else (
            (c, 1) for c in entries)
        for cyl, mult in items:
            if not isinstance(cyl, Cylinder):
                cyl = Cylinder(*cyl)
            if mult < 1:
                raise ValueError("multiplicities must be positive")
            acc[cyl] = acc.get(cyl, 0) + int(mult)
        self.entries: dict[Cylinder, int] = dict(
            sorted(acc.items(), key=lambda kv: kv[0].sort_key()))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "CylinderMultiset":
        return cls((Cylinder(a, b) for a, b in pairs))

    def items(self):
        return self.entries.items()

    def total_count(self) -> int:
        return sum(self.entries.values())

    def expand(self) -> list[Cylinder]:
        out = []
        for cyl, mult in self.entries.items():
            out.extend([cyl] * mult)
        return out

    def union(self, other: "CylinderMultiset") -> "CylinderMultiset":
        merged = dict(self.entries)
        for cyl, mult in other.entries.items():
            merged[cyl] = merged.get(cyl, 0) + mult
        return CylinderMultiset(merged)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, CylinderMultiset) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(tuple(self.entries.items()))

    def __repr__(self) -> str:
        inner = ", ".join(
            (f"{m}x" if m > 1 else "") + f"({c.a},{c.b})" for c, m in self.entries.items())
        return f"CylinderMultiset{{{inner}}}"

    def to_json(self) -> list[dict]:
        return [{"a": c.a, "b": c.b, "mult": m} for c, m in self.entries.items()]

    @classmethod
    def from_json(cls, data: list[dict]) -> "CylinderMultiset":
        return cls({Cylinder(d["a"], d["b"]): d["mult"] for d in data})


def multiset_sum(m: CylinderMultiset, field: AlgebraicField) -> FieldElement:
    """Exact sum of r^a (1-r)^b over the multiset, with multiplicity."""
    acc = field.zero()
    for cyl, mult in m.items():
        acc = acc + field.element([mult]) * cyl.value(field)
    return acc


def address_size(addr: str) -> Cylinder:
    return Cylinder(addr.count("1"), addr.count("0"))


def leaf_size(addr: str, relative_to: str = "") -> Cylinder:
    """Exponent pair of the suffix of ``addr`` below ``relative_to``."""
    if not addr.startswith(relative_to):
        raise NotADescendant(f"{addr!r} does not extend {relative_to!r}")
    suffix = addr[len(relative_to):]
    return address_size(suffix)


class TreePartition:
    """A prefix-free complete set of addresses below a root address."""

    __slots__ = ("root", "leaves")

    def __init__(self, leaves: Iterable[str], root: str = ""):
        self.root = root
        self.leaves: tuple[str, ...] = tuple(sorted(leaves, key=lambda a: (len(a), a)))

    @property
    def relative_depth(self) -> int:
        return max((len(leaf) - len(self.root) for leaf in self.leaves), default=0)

    def leaf_sizes(self) -> list[Cylinder]:
        return [leaf_size(leaf, self.root) for leaf in self.leaves]

    def __eq__(self, other) -> bool:
        return isinstance(other, TreePartition) and self.root == other.root \
            and self.leaves == other.leaves

    def __hash__(self) -> int:
        return hash((self.root, self.leaves))

    def __repr__(self) -> str:
        return f"TreePartition(root={self.root!r}, leaves={list(self.leaves)})"

    def to_json(self) -> dict:
        return {"root": self.root, "leaves": list(self.leaves)}

    @classmethod
    def from_json(cls, data: dict) -> "TreePartition":
        return cls(data["leaves"], data["root"])


def validate_tree_partition(t: TreePartition) -> None:
    """Raise unless the leaves form a prefix-free complete partition of the root."""
    if not t.leaves:
        raise IncompletenessGap("a tree partition must have at least one leaf")
    for leaf in t.leaves:
        if not leaf.startswith(t.root):
            raise NotADescendant(f"leaf {leaf!r} does not extend root {t.root!r}")
        if any(ch not in "01" for ch in leaf):
            raise CylinderError(f"address {leaf!r} contains non-binary characters")
    ordered = sorted(t.leaves)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.startswith(prev):
            raise PrefixViolation(prev, cur)
    if len(set(t.leaves)) != len(t.leaves):
        dup = next(a for a in ordered if ordered.count(a) > 1)
        raise PrefixViolation(dup, dup)
    kraft = sum(Fraction(1, 2 ** (len(leaf) - len(t.root))) for leaf in t.leaves)
    if kraft != 1:
        raise IncompletenessGap(f"Kraft sum is {kraft}, not 1")


class UniformizedPartition:
    """A tree partition expanded so every leaf has the same relative depth."""

    __slots__ = ("n", "counts", "leaf_map")

    def __init__(self, n: int, counts: tuple[int, ...], leaf_map: dict[str, str]):
        self.n = n
        self.counts = counts          # counts[i] = number of depth-n leaves with i ones
        self.leaf_map = leaf_map      # depth-n address -> original leaf


def uniformize(t: TreePartition) -> UniformizedPartition:
    """Extend every leaf to the maximum relative depth by full binary expansion."""
    validate_tree_partition(t)
    n = t.relative_depth
    leaf_map: dict[str, str] = {}
    counts = [0] * (n + 1)
    for leaf in t.leaves:
        pad = n - (len(leaf) - len(t.root))
        for k in range(2 ** pad):
            ext = leaf + format(k, f"0{pad}b") if pad else leaf
            leaf_map[ext] = leaf
            counts[leaf_size(ext, t.root).a] += 1
    for i in range(n + 1):
        assert counts[i] == comb(n, i), "uniformized leaf counts must be binomial"
    return UniformizedPartition(n, tuple(counts), leaf_map)


class RefinementWitness:
    """The p_ij matrix certifying that a tree partition refines a partition."""

    __slots__ = ("n", "p")

    def __init__(self, n: int, p: Sequence[Sequence[int]]):
        self.n = n
        self.p = tuple(tuple(int(v) for v in row) for row in p)
        if len(self.p) != n + 1:
            raise ValueError("witness must have n+1 rows")

    @property
    def parts(self) -> int:
        return len(self.p[0]) if self.p else 0

    def to_json(self) -> dict:
        return {"n": self.n, "p": [list(row) for row in self.p]}

    @classmethod
    def from_json(cls, data: dict) -> "RefinementWitness":
        return cls(data["n"], data["p"])

    def __eq__(self, other) -> bool:
        return isinstance(other, RefinementWitness) and self.n == other.n and self.p == other.p

    def __repr__(self) -> str:
        return f"RefinementWitness(n={self.n}, p={self.p})"


def check_witness(witness: RefinementWitness, root_size: Cylinder,
                  parts: Sequence[Cylinder], field: AlgebraicField) -> None:
    """Verify both witness invariant families exactly."""
    n, p = witness.n, witness.p
    m = len(parts)
    for i in range(n + 1):
        if sum(p[i]) != comb(n, i):
            raise RowSumMismatch(f"row {i} sums to {sum(p[i])}, expected C({n},{i})")
    a, b = root_size
    for j in range(m):
        acc = field.zero()
        for i in range(n + 1):
            if p[i][j]:
                acc = acc + field.element([p[i][j]]) * field.cylinder(a + i, b + n - i)
        if acc != parts[j].value(field):
            raise PartSumMismatch(j + 1)


def witness_from_grouping(t: TreePartition, grouping: Mapping[str, int],
                          parts: Sequence[Cylinder],
                          field: AlgebraicField,
                          root_size: Cylinder | None = None) -> RefinementWitness:
    """Build and verify the p matrix from a leaf -> part assignment.

    ``grouping`` maps each leaf to a 1-based part index; ``parts`` carries the
    declared cylinder size of each part.  ``root_size`` is the cylinder being
    partitioned; by default it is read off the root address of ``t``.
    Counting is combinatorial: a leaf of relative size (o, z) owns C(n-l, i-o)
    of the depth-n descendants with i ones, so no exponential expansion is
    materialized.
    """
    validate_tree_partition(t)
    m = len(parts)
    if set(grouping) != set(t.leaves):
        raise ValueError("grouping must cover exactly the leaves of the partition")
    n = t.relative_depth
    p = [[0] * m for _ in range(n + 1)]
    for leaf in t.leaves:
        j = grouping[leaf]
        if not (1 <= j <= m):
            raise ValueError(f"part index {j} out of range 1..{m}")
        size = leaf_size(leaf, t.root)
        rest = n - size.depth
        for extra in range(rest + 1):
            p[size.a + extra][j - 1] += comb(rest, extra)
    witness = RefinementWitness(n, p)
    if root_size is None:
        root_size = address_size(t.root)
    check_witness(witness, root_size, parts, field)
    return witness


def enumerate_tree_partitions(max_depth: int, root: str = ""):
    """Yield every tree partition of ``root`` with relative depth <= max_depth."""

    def shapes(addr: str, budget: int):
        yield (addr,)
        if budget > 0:
            for left in shapes(addr + "1", budget - 1):
                for right in shapes(addr + "0", budget - 1):
                    yield left + right

    for leaves in shapes(root, max_depth):
        yield TreePartition(leaves, root)
