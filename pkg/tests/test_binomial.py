import random
from fractions import Fraction
from math import comb

import pytest

from cantorkit.binomial import (
    BinomialRep,
    CoefficientOutOfRange,
    NotFound,
    complement_rep,
    cylinder_rep,
    degree_le1_representations,
    product_rep,
    search_rep,
    verify_rep,
)
from cantorkit.numberfield import make_field

R_FIELD = make_field("x^4+x-1", (Fraction(1, 2), Fraction(4, 5)))
S_FIELD = make_field("x^4-2x^2-x+1", (Fraction(1, 2), Fraction(3, 5)))
HALF = make_field("2x-1")


def _random_rep(rng, n):
    return BinomialRep(n, tuple(rng.randint(0, comb(n, i)) for i in range(n + 1)))


def test_rep_invariant_enforced():
    with pytest.raises(CoefficientOutOfRange):
        BinomialRep(2, (0, 3, 0))
    with pytest.raises(CoefficientOutOfRange):
        BinomialRep(1, (0, 0, 0))


def test_verify_square_rep():
    # s = r^2 is the single depth-2 coefficient a_2 = 1
    s = R_FIELD.cylinder(2, 0)
    assert verify_rep(BinomialRep(2, (0, 0, 1)), s, R_FIELD)


def test_verify_rep_of_r_in_s_field():
    # r = 1 - s^2 = (1-s)^2 + 2 s(1-s)
    s = S_FIELD.root()
    r = S_FIELD.one() - s * s
    assert verify_rep(BinomialRep(2, (1, 2, 0)), r, S_FIELD)


def test_verify_rejects_complement():
    assert not verify_rep(BinomialRep(1, (1, 0)), R_FIELD.root(), R_FIELD)


def test_complement_examples():
    assert complement_rep(BinomialRep(2, (0, 0, 1))) == BinomialRep(2, (1, 2, 0))
    assert complement_rep(BinomialRep(0, (1,))) == BinomialRep(0, (0,))


def test_product_of_two_r_reps_is_square():
    r1 = BinomialRep(1, (0, 1))
    assert product_rep(r1, r1) == BinomialRep(2, (0, 0, 1))


def test_product_with_one_pads():
    rep = BinomialRep(1, (0, 1))
    padded = product_rep(BinomialRep(0, (1,)), rep)
    assert padded.n == 1 and verify_rep(padded, R_FIELD.root(), R_FIELD)


def test_closure_laws_on_random_reps():
    rng = random.Random(19)
    one = R_FIELD.one()
    for _ in range(500):
        n1, n2 = rng.randint(0, 4), rng.randint(0, 4)
        r1, r2 = _random_rep(rng, n1), _random_rep(rng, n2)
        t1, t2 = r1.value(R_FIELD), r2.value(R_FIELD)
        assert verify_rep(complement_rep(r1), one - t1, R_FIELD)
        assert verify_rep(product_rep(r1, r2), t1 * t2, R_FIELD)
        assert complement_rep(complement_rep(r1)) == r1


def test_cylinder_rep_cases():
    rep = BinomialRep(2, (0, 0, 1))  # s = r^2
    assert cylinder_rep(1, 0, rep) == rep
    assert cylinder_rep(0, 1, rep) == complement_rep(rep)
    s = R_FIELD.cylinder(2, 0)
    both = cylinder_rep(1, 1, rep)
    assert verify_rep(both, s * (R_FIELD.one() - s), R_FIELD)


def test_search_finds_square():
    found = search_rep(R_FIELD.cylinder(2, 0), R_FIELD, n_max=4)
    assert found == BinomialRep(2, (0, 0, 1))


def test_search_finds_r_in_s_field():
    s = S_FIELD.root()
    found = search_rep(S_FIELD.one() - s * s, S_FIELD, n_max=4)
    assert found == BinomialRep(2, (1, 2, 0))
    assert verify_rep(found, S_FIELD.one() - s * s, S_FIELD)


def test_search_not_found_for_third_over_half():
    # depth-n sums over r = 1/2 all have denominator 2^n, never 1/3
    target = HALF.element([Fraction(1, 3)])
    assert search_rep(target, HALF, n_max=6) == NotFound(6)


def test_search_results_verify_on_random_targets():
    rng = random.Random(23)
    for _ in range(20):
        rep = _random_rep(rng, rng.randint(0, 3))
        target = rep.value(R_FIELD)
        found = search_rep(target, R_FIELD, n_max=4)
        assert isinstance(found, BinomialRep)
        assert verify_rep(found, target, R_FIELD)
        assert found.n <= rep.n


def test_degree_le1_outcomes():
    outcomes = degree_le1_representations(3)
    assert outcomes == {(), (1,), (0, 1), (1, -1)}


def test_rep_json_roundtrip():
    rep = BinomialRep(3, (1, 2, 0, 1))
    assert BinomialRep.from_json(rep.to_json()) == rep
