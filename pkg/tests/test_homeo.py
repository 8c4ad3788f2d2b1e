from fractions import Fraction

import pytest

from cantorkit.binomial import BinomialRep
from cantorkit.homeo import (
    ClopenCell,
    HomeoError,
    advance_stage,
    build,
    complement_map,
    export_table,
    flagship_pair,
    init_stage,
    make_embedding,
    verify_stage,
)
from cantorkit.numberfield import FieldElement, make_field

FIELD_R, FIELD_S, REP_R_IN_S, REP_S_IN_R = flagship_pair()
EMBED = make_embedding(FIELD_R, REP_S_IN_R)


def test_clopen_cell_rejects_overlap():
    with pytest.raises(HomeoError):
        ClopenCell(("1", "10"))


def test_cell_measure_and_containment():
    cell = ClopenCell(("11", "10", "0"))
    assert cell.measure(FIELD_R) == FIELD_R.one()
    assert ClopenCell(("",)).contains(cell)
    assert not cell.contains(ClopenCell(("",)))


def test_init_stage():
    stage = init_stage()
    assert stage.p == stage.q == (ClopenCell(("",)),)
    assert stage.pi == (0,)
    verify_stage(stage, None, FIELD_R, FIELD_S, EMBED)
    assert stage.p[0].measure(FIELD_R) == FIELD_R.one()
    assert stage.q[0].measure(FIELD_S) == FIELD_S.one()


def test_embedding_maps_s_to_r_squared():
    s = FIELD_S.root()
    r = FIELD_R.root()
    assert EMBED(s) == r * r
    assert EMBED(FIELD_S.one() - s * s) == r


def test_advance_stage_once():
    stage1 = advance_stage(init_stage(), FIELD_R, FIELD_S, REP_R_IN_S, REP_S_IN_R)
    assert stage1.index == 1
    verify_stage(stage1, init_stage(), FIELD_R, FIELD_S, EMBED)
    for x_cell, y_cell in stage1.pairs():
        assert x_cell.is_basic()
        assert EMBED(y_cell.measure(FIELD_S)) == x_cell.measure(FIELD_R)


def test_identity_build_is_identity():
    ident = BinomialRep(1, (0, 1))
    stages = build(FIELD_R, FIELD_R, ident, ident, 4)
    for stage in stages:
        for x_cell, y_cell in stage.pairs():
            assert x_cell == y_cell


def test_flagship_build_depth_four():
    stages = build(FIELD_R, FIELD_S, REP_R_IN_S, REP_S_IN_R, 4)
    assert [s.index for s in stages] == [0, 1, 2, 3, 4]
    # every P3 cell is a basic clopen set of length >= 2
    assert all(c.is_basic() and c.min_length() >= 2 for c in stages[3].p)
    assert all(c.is_basic() and c.min_length() >= 2 for c in stages[4].q)


def test_export_table_accounting():
    stages = build(FIELD_R, FIELD_S, REP_R_IN_S, REP_S_IN_R, 2)
    rows = export_table(stages, FIELD_R, FIELD_S)
    total_r = FIELD_R.zero()
    for row in rows:
        total_r = total_r + FieldElement.from_json(row["measure_r"], FIELD_R)
        assert row["src"] and row["dst"]
    assert total_r == FIELD_R.one()


def test_export_table_stage_zero():
    rows = export_table([init_stage()], FIELD_R, FIELD_S)
    assert len(rows) == 1
    assert FieldElement.from_json(rows[0]["measure_r"], FIELD_R) == FIELD_R.one()


def test_table_rows_group_to_ancestors():
    stages = build(FIELD_R, FIELD_S, REP_R_IN_S, REP_S_IN_R, 4)
    last, anchor = stages[-1], stages[2]
    for x_anc, y_anc in anchor.pairs():
        acc = FIELD_S.zero()
        for x_cell, y_cell in last.pairs():
            if x_anc.contains(x_cell):
                acc = acc + y_cell.measure(FIELD_S)
        assert acc == y_anc.measure(FIELD_S)


def test_complement_map():
    rows = complement_map(FIELD_R)
    assert {tuple(r["src"]) for r in rows} == {("1",), ("0",)}
    flip = {tuple(r["src"]): tuple(r["dst"]) for r in rows}
    assert flip[("1",)] == ("0",) and flip[("0",)] == ("1",)
    # composing the flip with itself is the identity
    assert all(flip[flip[k]] == k for k in flip)
    r = FIELD_R.root()
    row1 = next(r_ for r_ in rows if r_["src"] == ["1"])
    assert FieldElement.from_json(row1["measure_r"], FIELD_R) == r
    assert FieldElement.from_json(row1["measure_s"], FIELD_R) == r
