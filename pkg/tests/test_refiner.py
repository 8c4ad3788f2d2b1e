import random
from collections import Counter
from fractions import Fraction

import pytest

from cantorkit.cylinder import (
    Cylinder,
    CylinderMultiset,
    TreePartition,
    address_size,
    multiset_sum,
    validate_tree_partition,
)
from cantorkit.numberfield import make_field
from cantorkit.refiner import (
    FastWorkspace,
    GenericSearch,
    GreedyCarve,
    NotFoundWithinBounds,
    R4Square,
    RefinerError,
    Selmer,
    StrategyInapplicable,
    SumMismatchError,
    WindowTooSmall,
    all_ones_leaf_count,
    carve_expansions,
    carve_weights,
    certificate_dumps,
    certificate_from_json,
    certificate_to_json,
    check_rational_obstruction,
    eqb_products,
    eqc_products,
    eqd_products,
    eqe_products,
    generic_search,
    r4s_canonicalize,
    r4s_shared_level,
    refine_partition,
    selmer_canonicalize,
    selmer_window_independent,
    verify_certificate,
)
from cantorkit.rewrite import TraceBuilder

S_FIELD = make_field("x^4-2x^2-x+1", (Fraction(1, 2), Fraction(3, 5)))
SELMER4 = make_field("x^4+x-1", (Fraction(1, 2), Fraction(4, 5)))
HALF = make_field("2x-1")


def _sum(field, cyls):
    return multiset_sum(CylinderMultiset(cyls), field)


@pytest.mark.parametrize("macro,a,b", [
    (eqb_products, 0, 0), (eqb_products, 1, 3), (eqb_products, 2, 5),
    (eqc_products, 1, 0), (eqc_products, 3, 1), (eqc_products, 2, 2),
    (eqd_products, 0, 0), (eqd_products, 2, 2), (eqd_products, 1, 1),
    (eqe_products, 0, 0), (eqe_products, 1, 0), (eqe_products, 3, 2),
])
def test_macro_products_preserve_value(macro, a, b):
    assert _sum(S_FIELD, macro(a, b)) == S_FIELD.cylinder(a, b)


def test_eqb_on_unit_cylinder():
    assert eqb_products(0, 0) == [Cylinder(1, 0), Cylinder(2, 0),
                                  Cylinder(2, 1), Cylinder(3, 1)]


@pytest.mark.parametrize("name,a,b", [
    ("eqb", 0, 0), ("eqb", 2, 1), ("eqc", 1, 0), ("eqc", 2, 3),
    ("eqd", 0, 0), ("eqd", 1, 1), ("eqe", 0, 0), ("eqe", 2, 1),
    ("tsplit", 1, 2),
])
def test_tree_realization_matches_split_products(name, a, b):
    from cantorkit.refiner import MACROS
    products_fn, tree_fn = MACROS[name]
    builder = TraceBuilder(S_FIELD, [Cylinder(a, b)])
    tree_fn(builder, 0)
    trace = builder.finish()
    assert trace.final_multiset() == CylinderMultiset(products_fn(a, b))
    assert trace.total() == S_FIELD.cylinder(a, b)


def test_eqc_requires_positive_exponent():
    with pytest.raises(StrategyInapplicable):
        eqc_products(0, 2)


# ---------------------------------------------------------------------------
# selmer canonicalization

def test_selmer_canonical_of_unit():
    m, trace = selmer_canonicalize(CylinderMultiset([Cylinder(0, 0)]), None, SELMER4)
    assert m == CylinderMultiset([Cylinder(1, 0), Cylinder(4, 0)])
    assert trace.total() == SELMER4.one()


def test_selmer_window_too_small():
    with pytest.raises(WindowTooSmall):
        selmer_canonicalize(CylinderMultiset([Cylinder(6, 0)]), 5, SELMER4)


def test_selmer_window_powers_independent():
    assert selmer_window_independent(SELMER4, 4)
    assert selmer_window_independent(SELMER4, 9)


def _random_descendants(rng, start, steps, selmer_n=None):
    """Random equal-sum multiset reached from ``start`` by splits."""
    items = list(start)
    for _ in range(steps):
        i = rng.randrange(len(items))
        cyl = items.pop(i)
        if selmer_n is not None and cyl.b > 0 and rng.random() < 0.3:
            items.append(Cylinder(cyl.a + selmer_n, cyl.b - 1))
        else:
            items.extend(cyl.split())
    return items


def test_selmer_confluence_random():
    rng = random.Random(7)
    start = [Cylinder(0, 0)]
    for _ in range(25):
        side1 = _random_descendants(rng, start, rng.randrange(1, 9), 4)
        side2 = _random_descendants(rng, start, rng.randrange(1, 9), 4)
        k = 4 + max(c.a + 4 * c.b for c in side1 + side2)
        m1, _ = selmer_canonicalize(CylinderMultiset(side1), k, SELMER4,
                                    with_trace=False)
        m2, _ = selmer_canonicalize(CylinderMultiset(side2), k, SELMER4,
                                    with_trace=False)
        assert m1 == m2
        assert multiset_sum(m1, SELMER4) == SELMER4.one()


# ---------------------------------------------------------------------------
# canonicalization in the field of s

def test_r4s_canonical_of_unit():
    m, trace = r4s_canonicalize(CylinderMultiset([Cylinder(0, 0)]), S_FIELD)
    allowed = {Cylinder(2, 1), Cylinder(1, 2), Cylinder(2, 2), Cylinder(3, 2)}
    assert set(dict(m.items())) <= allowed
    assert trace.total() == S_FIELD.one()


def test_r4s_confluence_random():
    rng = random.Random(11)
    start = [Cylinder(1, 1)]
    for _ in range(15):
        side1 = _random_descendants(rng, start, rng.randrange(1, 7))
        side2 = _random_descendants(rng, start, rng.randrange(1, 7))
        k = r4s_shared_level([CylinderMultiset(side1), CylinderMultiset(side2)],
                             S_FIELD)
        m1, _ = r4s_canonicalize(CylinderMultiset(side1), S_FIELD, k,
                                 with_trace=False)
        m2, _ = r4s_canonicalize(CylinderMultiset(side2), S_FIELD, k,
                                 with_trace=False)
        assert m1 == m2
        assert multiset_sum(m1, S_FIELD) == S_FIELD.cylinder(1, 1)


def test_r4s_rejects_other_fields():
    with pytest.raises(StrategyInapplicable):
        r4s_canonicalize(CylinderMultiset([Cylinder(0, 0)]), SELMER4)


def test_fast_workspace_validates_macros_once():
    FastWorkspace._validated.clear()
    ws = FastWorkspace(S_FIELD, CylinderMultiset([Cylinder(0, 0)] * 5))
    ws.apply_macro("eqd", Cylinder(0, 0))
    assert (S_FIELD.minpoly.coeffs, "eqd", Cylinder(0, 0)) in FastWorkspace._validated
    assert sum(ws.support().values()) == 5 * 5


# ---------------------------------------------------------------------------
# refine_partition

def _verify(cert, field):
    data = certificate_to_json(cert, field)
    verify_certificate(data)
    return data


def test_refine_selmer_two_parts():
    cert = refine_partition(SELMER4, Cylinder(0, 0),
                            [Cylinder(1, 0), Cylinder(0, 1)], Selmer())
    assert set(cert.grouping.values()) == {1, 2}
    _verify(cert, SELMER4)


def test_refine_selmer_random_parts():
    rng = random.Random(3)
    for _ in range(5):
        parts = _random_descendants(rng, [Cylinder(1, 1)], rng.randrange(2, 6), 4)
        cert = refine_partition(SELMER4, Cylinder(1, 1), parts, Selmer())
        _verify(cert, SELMER4)


def test_refine_r4square_two_parts():
    cert = refine_partition(S_FIELD, Cylinder(0, 0),
                            [Cylinder(1, 0), Cylinder(0, 1)], R4Square())
    _verify(cert, S_FIELD)


def test_refine_requires_matching_sum():
    with pytest.raises(SumMismatchError):
        refine_partition(SELMER4, Cylinder(0, 0),
                         [Cylinder(1, 0), Cylinder(1, 0)], Selmer())


def test_refine_trivial_partition():
    cert = refine_partition(HALF, Cylinder(2, 1), [Cylinder(2, 1)], GenericSearch())
    assert cert.partition.leaves == ("",)
    _verify(cert, HALF)


def test_certificate_roundtrip_is_byte_identical():
    cert = refine_partition(SELMER4, Cylinder(0, 0),
                            [Cylinder(1, 0), Cylinder(0, 1)], Selmer())
    text = certificate_dumps(cert, SELMER4)
    cert2, field2 = certificate_from_json(__import__("json").loads(text))
    assert certificate_dumps(cert2, field2) == text


def test_verify_rejects_tampered_grouping():
    cert = refine_partition(SELMER4, Cylinder(0, 0),
                            [Cylinder(1, 0), Cylinder(0, 1)], Selmer())
    data = certificate_to_json(cert, SELMER4)
    leaf = next(iter(data["grouping"]))
    data["grouping"][leaf] = 3 - data["grouping"][leaf]
    with pytest.raises(Exception):
        verify_certificate(data)


# ---------------------------------------------------------------------------
# generic search and greedy carving

def test_generic_search_halves():
    cert = generic_search(HALF, Cylinder(0, 0), [Cylinder(1, 0), Cylinder(0, 1)],
                          max_depth=2)
    assert len(cert.partition.leaves) == 2
    _verify(cert, HALF)


def test_generic_search_golden_parts():
    field = make_field("x^2+x-1")
    cert = generic_search(field, Cylinder(0, 0),
                          [Cylinder(2, 0), Cylinder(1, 1), Cylinder(0, 1)],
                          max_depth=3)
    _verify(cert, field)


def test_generic_search_not_found():
    third = make_field("3x-1")
    with pytest.raises(NotFoundWithinBounds):
        generic_search(third, Cylinder(0, 0), [Cylinder(1, 0)] * 3,
                       max_depth=3, fuel=20000)


def test_greedy_carve_selmer_parts():
    rng = random.Random(5)
    for _ in range(5):
        parts = _random_descendants(rng, [Cylinder(0, 0)], rng.randrange(2, 8))
        cert = refine_partition(SELMER4, Cylinder(0, 0), parts, GreedyCarve())
        _verify(cert, SELMER4)


def test_greedy_carve_dyadic():
    cert = refine_partition(HALF, Cylinder(0, 0),
                            [Cylinder(1, 0), Cylinder(2, 0), Cylinder(2, 0)],
                            GreedyCarve())
    _verify(cert, HALF)


def test_greedy_carve_handles_fields_without_move_system():
    # no dedicated move system, but the boundary-slicing carve still tiles it
    field = make_field("x^4+2x-1")
    parts = [Cylinder(2, 0), Cylinder(1, 1), Cylinder(1, 1), Cylinder(0, 2)]
    cert = refine_partition(field, Cylinder(0, 0), parts, GreedyCarve())
    _verify(cert, field)


def test_greedy_carve_gives_up_when_fuel_runs_out():
    from cantorkit.rewrite import FuelExhausted
    field = make_field("x^4+2x-1")
    parts = [Cylinder(2, 0), Cylinder(1, 1), Cylinder(1, 1), Cylinder(0, 2)]
    with pytest.raises(FuelExhausted):
        refine_partition(field, Cylinder(0, 0), parts, GreedyCarve(fuel=2))


# ---------------------------------------------------------------------------
# rational obstruction

def test_rational_refinement_found_for_half():
    res = check_rational_obstruction(Fraction(1, 2),
                                     [Fraction(1, 2), Fraction(1, 2)], 1)
    assert res.refined and not res.refutation
    assert res.partition.leaves == ("0", "1")


def test_rational_obstruction_for_thirds():
    res = check_rational_obstruction(Fraction(1, 3), [Fraction(1, 3)] * 3, 10)
    assert res.refutation
    assert res.depth == 10


def test_rational_obstruction_accepts_cylinders():
    res = check_rational_obstruction(Fraction(1, 3), [Cylinder(1, 0)] * 3, 6)
    assert res.refutation


def test_all_ones_leaf_is_unique():
    from cantorkit.cylinder import enumerate_tree_partitions
    for t in enumerate_tree_partitions(4):
        assert all_ones_leaf_count(t) == 1


# ---------------------------------------------------------------------------
# tagged carves

def _check_tagged_carve(field, root, leaves, want):
    """Leaves must partition root and each tag's leaves must sum exactly."""
    validate_tree_partition(TreePartition(leaves))
    got = {}
    for addr, tag in leaves.items():
        size = address_size(addr)
        cyl = Cylinder(root.a + size.a, root.b + size.b)
        acc = got.setdefault(tag, field.zero())
        got[tag] = acc + cyl.value(field)
    assert set(got) == set(want)
    for tag, total in want.items():
        assert got[tag] == total


def test_carve_weights_two_tags():
    field = SELMER4
    want = {
        0: field.element([0, 1]),
        1: Cylinder(0, 1).value(field),
    }
    leaves = carve_weights(4, 0, [(0, Counter({1: 1})), (1, Counter({4: 1}))])
    _check_tagged_carve(field, Cylinder(0, 0), leaves, want)


def test_carve_weights_random_demands():
    field = SELMER4
    rng = random.Random(41)
    for _ in range(25):
        # grow a random partition of the unit cylinder, tag its leaves,
        # then re-carve the tagged weight demands from scratch
        cells = [(0, "")]
        for _ in range(rng.randrange(1, 12)):
            w, addr = cells.pop(rng.randrange(len(cells)))
            cells.append((w + 1, addr + "1"))
            cells.append((w + 4, addr + "0"))
        ntags = rng.randrange(2, 5)
        pend = [(t, Counter()) for t in range(ntags)]
        want = {t: field.zero() for t in range(ntags)}
        for w, addr in cells:
            t = rng.randrange(ntags)
            pend[t][1][w] += 1
            want[t] = want[t] + Cylinder(w, 0).value(field)
        pend = [(t, c) for t, c in pend if c]
        want = {t: v for t, v in want.items() if any(t == u for u, _ in pend)}
        leaves = carve_weights(4, 0, pend)
        _check_tagged_carve(field, Cylinder(0, 0), leaves, want)


def test_carve_weights_rejects_coarse_demand():
    with pytest.raises(RefinerError):
        carve_weights(4, 3, [(0, Counter({2: 1})), (1, Counter({4: 1}))])


def test_carve_weights_rejects_empty_demand():
    with pytest.raises(RefinerError):
        carve_weights(4, 0, [])


def test_carve_expansions_selmer_pieces():
    field = SELMER4
    items = [(0, Cylinder(1, 0), 1), (1, Cylinder(0, 1), 1)]
    want = {
        0: Cylinder(1, 0).value(field),
        1: Cylinder(0, 1).value(field),
    }
    leaves = carve_expansions(field, Cylinder(0, 0), items)
    _check_tagged_carve(field, Cylinder(0, 0), leaves, want)


def test_carve_expansions_below_deep_root():
    field = SELMER4
    root = Cylinder(2, 1)
    items = [(0, Cylinder(3, 1), 1), (1, Cylinder(2, 2), 1)]
    want = {
        0: Cylinder(3, 1).value(field),
        1: Cylinder(2, 2).value(field),
    }
    leaves = carve_expansions(field, root, items)
    _check_tagged_carve(field, root, leaves, want)


def test_carve_expansions_s_field_pieces():
    field = S_FIELD
    items = [(0, Cylinder(1, 0), 1), (1, Cylinder(0, 1), 1)]
    want = {
        0: Cylinder(1, 0).value(field),
        1: Cylinder(0, 1).value(field),
    }
    leaves = carve_expansions(field, Cylinder(0, 0), items)
    _check_tagged_carve(field, Cylinder(0, 0), leaves, want)


def test_carve_expansions_rejects_bad_total():
    field = SELMER4
    items = [(0, Cylinder(1, 0), 1), (1, Cylinder(1, 0), 1)]
    with pytest.raises(RefinerError):
        carve_expansions(field, Cylinder(0, 0), items)
