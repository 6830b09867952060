"""CSV ingestion, null handling, round-tripping, and metric annotation
over the retail fixture (relations U, H, I, P, A, V; null token N)."""

from fractions import Fraction

import pytest

from fanout_guard.errors import CellTypeError, MissingAttribute, NonNumericPayload, ParseError
from fanout_guard.fixtures import retail_dir
from fanout_guard.loader import load_bundle
from fanout_guard.relation import (
    ColType,
    Schema,
    annotate_for_metric,
    load_csv,
    load_csv_text,
    write_csv,
)
from fanout_guard.semantic_model import Agg, Metric
from fanout_guard.semiring import Annotation, SemiringKind, zero

ITEM_SCHEMA = Schema(
    relation_name="I",
    attributes=(("iid", ColType.INT), ("size", ColType.INT), ("price", ColType.REAL)),
)


@pytest.fixture(scope="module")
def retail():
    return load_bundle(retail_dir(), "retail")


def test_load_item_csv_with_null_token():
    rel = load_csv(retail_dir() / "I.csv", ITEM_SCHEMA, null_token="N")
    assert len(rel) == 3
    # item 2 has size NULL
    assert rel.rows[1].values == (2, None, 30.0)
    assert [r.row_id for r in rel.rows] == [0, 1, 2]


def test_load_empty_csv_header_only(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("iid,size,price\n", encoding="utf-8")
    rel = load_csv(p, ITEM_SCHEMA, null_token="N")
    assert len(rel) == 0


def test_bad_int_cell_names_row_and_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("iid,size,price\nabc,1,20\n", encoding="utf-8")
    with pytest.raises(CellTypeError) as exc:
        load_csv(p, ITEM_SCHEMA, null_token="N")
    assert exc.value.details["row"] == 0
    assert exc.value.details["column"] == "iid"


def test_header_mismatch_and_arity():
    with pytest.raises(ParseError):
        load_csv_text("iid,price\n1,20\n", ITEM_SCHEMA)
    with pytest.raises(ParseError) as exc:
        load_csv_text("iid,size,price\n1,2\n", ITEM_SCHEMA)
    assert exc.value.details["row"] == 0


def test_csv_round_trip_bit_exact(tmp_path, retail):
    for name, rel in retail.db.relations.items():
        out = tmp_path / f"{name}.csv"
        write_csv(rel, out, null_token="N")
        back = load_csv(out, rel.schema, null_token="N")
        assert [r.values for r in back.rows] == [r.values for r in rel.rows]


def test_annotate_sum_price(retail):
    metric = Metric(name="total_revenue", agg=Agg.SUM, payload="I.price")
    db = annotate_for_metric(retail.db, metric)
    assert [r.ann for r in db["I"].rows] == [
        Annotation.sum_real(20),
        Annotation.sum_real(30),
        Annotation.sum_real(35),
    ]
    for other in ("H", "U", "V", "A", "P"):
        assert all(r.ann == Annotation.sum_real(1) for r in db[other].rows)
    # payload side pads with zero, everything else with one
    assert db["I"].null_row_ann == zero(SemiringKind.SUM_REAL)
    assert db["H"].null_row_ann == Annotation.sum_real(1)
    assert db.null_payload_count == 0


def test_annotate_count_star(retail):
    metric = Metric(name="purchase_count", agg=Agg.COUNT, payload="*")
    db = annotate_for_metric(retail.db, metric)
    for rel in db.relations.values():
        assert all(r.ann == Annotation.count(1) for r in rel.rows)
        assert rel.null_row_ann == Annotation.count(1)


def test_annotate_null_payload_reported(retail):
    # item 2 has size NULL: SQL SUM skips it, we annotate zero and report
    metric = Metric(name="total_size", agg=Agg.SUM, payload="I.size")
    db = annotate_for_metric(retail.db, metric)
    anns = [r.ann for r in db["I"].rows]
    assert anns[1] == zero(SemiringKind.SUM_REAL)
    assert anns[0] == Annotation.sum_real(1) and anns[2] == Annotation.sum_real(5)
    assert db.null_payload_count == 1


def test_annotate_is_idempotent_and_preserves_tuples(retail):
    metric = Metric(name="total_revenue", agg=Agg.SUM, payload="I.price")
    once = annotate_for_metric(retail.db, metric)
    twice = annotate_for_metric(once, metric)
    for name in retail.db.relations:
        assert [r.values for r in twice[name].rows] == [r.values for r in retail.db[name].rows]
        assert [r.ann for r in twice[name].rows] == [r.ann for r in once[name].rows]


def test_annotate_errors(retail):
    with pytest.raises(MissingAttribute):
        annotate_for_metric(retail.db, Metric(name="m", agg=Agg.SUM, payload="I.nope"))
    with pytest.raises(NonNumericPayload):
        annotate_for_metric(retail.db, Metric(name="m", agg=Agg.SUM, payload="U.name"))


def test_annotate_avg_pairs(retail):
    metric = Metric(name="avg_price", agg=Agg.AVG, payload="I.price")
    db = annotate_for_metric(retail.db, metric)
    assert [r.ann.value for r in db["I"].rows] == [(1.0, 20.0), (1.0, 30.0), (1.0, 35.0)]
    assert all(r.ann.value == (1.0, 0.0) for r in db["H"].rows)


def test_count_annotation_stays_rational():
    ann = Annotation.count(1)
    assert isinstance(ann.value, Fraction)
