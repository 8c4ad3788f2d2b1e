"""Multisets, addresses, tree partitions, and refinement witnesses."""

from fractions import Fraction
from math import comb

import pytest

from cantorkit.cylinder import (
    Cylinder,
    CylinderMultiset,
    IncompletenessGap,
    NotADescendant,
    PartSumMismatch,
    PrefixViolation,
    TreePartition,
    enumerate_tree_partitions,
    leaf_size,
    multiset_sum,
    uniformize,
    validate_tree_partition,
    witness_from_grouping,
)
from cantorkit.numberfield import make_field

EQA_LEAVES = ["11", "00", "101", "100", "010", "0111", "0110"]


@pytest.fixture(scope="module")
def selmer4():
    return make_field("x^4+x-1", (Fraction(7, 10), Fraction(8, 10)))


def test_multiset_sum_cube_identity(selmer4):
    m = CylinderMultiset({Cylinder(3, 0): 1, Cylinder(0, 3): 1, Cylinder(1, 1): 3})
    assert multiset_sum(m, selmer4) == selmer4.one()
    assert multiset_sum(CylinderMultiset(), selmer4).is_zero()


def test_multiset_sum_eqa_in_s_field():
    sfield = make_field("x^4-2x^2-x+1", (Fraction(1, 2), Fraction(6, 10)))
    m = CylinderMultiset.from_pairs(
        [(2, 0), (0, 2), (2, 1), (1, 2), (1, 2), (3, 1), (2, 2)])
    assert multiset_sum(m, sfield) == sfield.one()


def test_leaf_size():
    assert leaf_size("110", "") == Cylinder(2, 1)
    assert leaf_size("0111", "0") == Cylinder(3, 0)
    with pytest.raises(NotADescendant):
        leaf_size("10", "01")


def test_validate_tree_partition_eqa():
    validate_tree_partition(TreePartition(EQA_LEAVES))


def test_validate_tree_partition_violations():
    with pytest.raises(PrefixViolation):
        validate_tree_partition(TreePartition(["1", "11"]))
    with pytest.raises(IncompletenessGap):
        validate_tree_partition(TreePartition(["1"]))


def test_uniformize_eqa():
    u = uniformize(TreePartition(EQA_LEAVES))
    assert u.n == 4
    assert u.counts == (1, 4, 6, 4, 1)
    assert u.leaf_map["1110"] == "11"


def test_uniformize_trivial():
    assert uniformize(TreePartition([""])).n == 0
    assert uniformize(TreePartition([""])).counts == (1,)
    u = uniformize(TreePartition(["1", "0"]))
    assert u.n == 1 and u.counts == (1, 1)


def test_uniformize_idempotent_on_uniform():
    t = TreePartition(["11", "10", "01", "00"])
    u = uniformize(t)
    assert set(u.leaf_map) == set(t.leaves)


def test_witness_from_grouping_cube(selmer4):
    t = TreePartition([format(k, "03b") for k in range(8)])
    grouping = {"111": 1, "000": 2, "110": 3, "100": 3, "101": 4, "010": 4,
                "011": 5, "001": 5}
    parts = [Cylinder(3, 0), Cylinder(0, 3), Cylinder(1, 1), Cylinder(1, 1),
             Cylinder(1, 1)]
    w = witness_from_grouping(t, grouping, parts, selmer4)
    assert w.n == 3
    assert tuple(sum(row) for row in w.p) == (1, 3, 3, 1)


def test_witness_trivial(selmer4):
    t = TreePartition(["1", "0"])
    w = witness_from_grouping(t, {"1": 1, "0": 1}, [Cylinder(0, 0)], selmer4)
    assert w.n == 1 and w.p == ((1,), (1,))


def test_witness_mismatched_declared_size(selmer4):
    t = TreePartition(["1", "0"])
    with pytest.raises(PartSumMismatch):
        witness_from_grouping(t, {"1": 1, "0": 2},
                              [Cylinder(1, 0), Cylinder(2, 0)], selmer4)


def test_partition_sum_invariant(selmer4):
    # leaf sizes of any valid tree partition sum to the root size
    for t in [TreePartition(EQA_LEAVES), TreePartition(["1", "01", "001", "000"]),
              TreePartition(["11", "10", "0"], root="")]:
        total = multiset_sum(CylinderMultiset(t.leaf_sizes()), selmer4)
        assert total == selmer4.one()
    # relative leaf sizes of a rooted partition also sum to 1
    t = TreePartition(["101", "1001", "1000", "11"], root="1")
    total = multiset_sum(CylinderMultiset(t.leaf_sizes()), selmer4)
    assert total == selmer4.one()


def test_enumeration_matches_validation():
    # every enumerated partition validates; counts follow T(d) = 1 + T(d-1)^2
    seen = set()
    for t in enumerate_tree_partitions(3):
        validate_tree_partition(t)
        seen.add(t.leaves)
    assert len(seen) == 26
    # and some invalid address sets are rejected
    for bad in [["1", "11"], ["1"], ["11", "10"]]:
        with pytest.raises((PrefixViolation, IncompletenessGap)):
            validate_tree_partition(TreePartition(bad))


def test_multiset_json_roundtrip():
    m = CylinderMultiset({Cylinder(1, 2): 3, Cylinder(0, 0): 1})
    assert CylinderMultiset.from_json(m.to_json()) == m
    t = TreePartition(EQA_LEAVES)
    assert TreePartition.from_json(t.to_json()) == t
