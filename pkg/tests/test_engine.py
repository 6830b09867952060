"""Engine semantics over the retail fixture, plus randomized equivalence
of the three evaluation routes (materialized, pushdown, nested-loop oracle).

Worked values used below (Table 1 data):

    H(uid, iid, pid): (1,1,1) (2,1,1) (2,2,N) (2,4,2)
    I(iid, size, price): (1,1,20) (2,N,30) (3,5,35)
    V(uid, aid): (1,1) (1,2) (2,1)

    SUM(I.price) over H left-join I: 20 + 20 + 30 + nothing-for-iid=4 = 70
    count partials by uid: H -> {1: 1, 2: 3}, V -> {1: 2, 2: 1}
"""

import random
from fractions import Fraction

import pytest

import oracles
from fanout_guard import weighing
from fanout_guard.engine import (
    aggregate,
    evaluate,
    join,
    partial_view,
    project_aggregate,
    pushdown_aggregate,
    qualify,
)
from fanout_guard.errors import (
    BadJoinAttr,
    KindMismatch,
    MissingWeights,
    RangeError,
    UnknownAttribute,
    UnknownRelation,
)
from fanout_guard.fixtures import retail_dir
from fanout_guard.loader import load_bundle
from fanout_guard.relation import AnnotatedRelation, ColType, Row, Schema, annotate_for_metric
from fanout_guard.semantic_model import (
    Atom,
    ExploratoryQuery,
    Predicate,
    resolve,
)
from fanout_guard.semiring import Annotation, SemiringKind, one, sr_add, sr_finalize, zero
from instances import make_instance


@pytest.fixture(scope="module")
def retail():
    return load_bundle(retail_dir(), "retail")


def counted(rel):
    return rel.with_rows(
        [Row(r.row_id, r.values, one(SemiringKind.COUNT)) for r in rel.rows],
        kind=SemiringKind.COUNT,
    )


def plan_for(retail, metric, group_by=(), selection=None, joins=()):
    q = ExploratoryQuery(
        base=retail.layer.base_query(metric),
        group_by=tuple(group_by),
        selection=selection,
        extra_relations=tuple(joins),
    )
    return resolve(q, retail.graph, retail.db)


def equal_on_v(retail):
    return {"V": weighing.build(weighing.Equal(), retail.db["V"], ("uid",))}


class TestAggregate:
    def test_count_partials_by_uid(self, retail):
        h = counted(retail.db["H"])
        v = counted(retail.db["V"])
        assert aggregate(h, ["uid"]).groups == {
            (1,): Annotation.count(1),
            (2,): Annotation.count(3),
        }
        assert aggregate(v, ["uid"]).groups == {
            (1,): Annotation.count(2),
            (2,): Annotation.count(1),
        }

    def test_global_group_over_empty_relation_is_zero(self):
        schema = Schema("E", (("x", ColType.INT),))
        rel = AnnotatedRelation(schema=schema, rows=[], kind=SemiringKind.COUNT)
        assert aggregate(rel, []).groups == {(): zero(SemiringKind.COUNT)}

    def test_null_keys_form_their_own_group(self, retail):
        h = counted(retail.db["H"])
        res = aggregate(h, ["pid"])
        assert res.groups[(None,)] == Annotation.count(1)
        assert res.groups[(1,)] == Annotation.count(2)

    def test_unknown_attribute(self, retail):
        with pytest.raises(UnknownAttribute):
            aggregate(counted(retail.db["H"]), ["nope"])


class TestJoin:
    def test_left_outer_preserves_unmatched_with_zero_payload(self, retail):
        metric = retail.layer.metrics["total_revenue"]
        db = annotate_for_metric(retail.db, metric)
        joined = join(qualify(db["H"]), qualify(db["I"]), [("H.iid", "I.iid")])
        assert len(joined) == 4
        assert sorted(r.ann.value for r in joined.rows) == [0.0, 20.0, 20.0, 30.0]
        assert sr_finalize(aggregate(joined, []).groups[()]) == 70.0
        # the padded row keeps its tuple, NULL-extended
        padded = [r for r in joined.rows if r.ann.value == 0.0][0]
        assert padded.values[:3] == (2, 4, 2)
        assert padded.values[3:] == (None, None, None)

    def test_inner_drops_unmatched_but_same_sum(self, retail):
        metric = retail.layer.metrics["total_revenue"]
        db = annotate_for_metric(retail.db, metric)
        joined = join(qualify(db["H"]), qualify(db["I"]), [("H.iid", "I.iid")], mode="inner")
        assert len(joined) == 3
        assert sr_finalize(aggregate(joined, []).groups[()]) == 70.0

    def test_count_distinguishes_inner_from_outer(self, retail):
        h, i = counted(retail.db["H"]), counted(retail.db["I"])
        outer = join(qualify(h), qualify(i), [("H.iid", "I.iid")])
        inner = join(qualify(h), qualify(i), [("H.iid", "I.iid")], mode="inner")
        assert aggregate(outer, []).groups[()] == Annotation.count(4)
        assert aggregate(inner, []).groups[()] == Annotation.count(3)

    def test_left_outer_with_empty_right(self, retail):
        h = counted(retail.db["H"])
        empty = AnnotatedRelation(
            schema=Schema("E", (("iid", ColType.INT),)),
            rows=[],
            kind=SemiringKind.COUNT,
            null_row_ann=one(SemiringKind.COUNT),
        )
        joined = join(qualify(h), qualify(empty), [("H.iid", "E.iid")])
        assert len(joined) == 4
        assert [r.ann for r in joined.rows] == [r.ann for r in h.rows]
        assert all(r.values[-1] is None for r in joined.rows)

    def test_null_keys_never_match(self):
        schema = Schema("L", (("k", ColType.INT),))
        left = AnnotatedRelation(
            schema=schema,
            rows=[Row(0, (None,), one(SemiringKind.COUNT))],
            kind=SemiringKind.COUNT,
        )
        right = AnnotatedRelation(
            schema=Schema("R", (("k", ColType.INT),)),
            rows=[Row(0, (None,), one(SemiringKind.COUNT))],
            kind=SemiringKind.COUNT,
            null_row_ann=one(SemiringKind.COUNT),
        )
        joined = join(qualify(left), qualify(right), [("L.k", "R.k")])
        assert len(joined) == 1
        assert joined.rows[0].values == (None, None)

    def test_kind_mismatch_and_bad_attr(self, retail):
        h = counted(retail.db["H"])
        metric = retail.layer.metrics["total_revenue"]
        i_sum = annotate_for_metric(retail.db, metric)["I"]
        with pytest.raises(KindMismatch):
            join(qualify(h), qualify(i_sum), [("H.iid", "I.iid")])
        with pytest.raises(BadJoinAttr):
            join(qualify(h), qualify(counted(retail.db["I"])), [("H.nope", "I.iid")])


class TestEvaluate:
    def test_q3_equal_weighing(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        res = evaluate(plan, retail.db, equal_on_v(retail))
        assert res.finalized() == {("Google",): 60.0, ("Facebook",): 10.0}

    def test_q3_last_view_wins(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        wt = weighing.build(
            weighing.OrderBased(attr="aid", pick="last"), retail.db["V"], ("uid",)
        )
        res = evaluate(plan, retail.db, {"V": wt})
        assert res.finalized() == {("Google",): 50.0, ("Facebook",): 20.0}

    def test_base_only_q2_is_70(self, retail):
        plan = plan_for(retail, "total_revenue")
        res = evaluate(plan, retail.db, {})
        assert res.finalized() == {(): 70.0}

    def test_missing_weights_lists_targets(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        with pytest.raises(MissingWeights) as exc:
            evaluate(plan, retail.db, {})
        assert exc.value.details["targets"] == ["V"]

    def test_selection_partition(self, retail):
        sel = Predicate(atoms=(Atom(attr="I.price", op=">", literal=25),))
        plan = plan_for(retail, "total_revenue", selection=sel)
        res = evaluate(plan, retail.db, {})
        # 30 selected; 20+20 and the padded NULL-price row rejected
        assert sr_finalize(res.total()) == 30.0
        assert sr_finalize(res.not_selected_total) == 40.0

    def test_count_weighted_stays_rational(self, retail):
        plan = plan_for(retail, "purchase_count", ["A.source"])
        res = evaluate(plan, retail.db, equal_on_v(retail))
        total = res.total()
        assert isinstance(total.value, Fraction)
        assert total.value == 4


class TestPushdown:
    def test_table4_count_over_h_v(self, retail):
        """The partial-aggregation walkthrough: counts by uid joined."""
        h, v = retail.db["H"], retail.db["V"]
        gh = aggregate(counted(h), ["uid"])
        gv = aggregate(counted(v), ["uid"])
        assert gh.groups == {(1,): Annotation.count(1), (2,): Annotation.count(3)}
        assert gv.groups == {(1,): Annotation.count(2), (2,): Annotation.count(1)}
        hp = project_aggregate(qualify(counted(h)), ["H.uid"])
        vp = project_aggregate(qualify(counted(v)), ["V.uid"])
        joined = join(hp, vp, [("H.uid", "V.uid")])
        per_uid = aggregate(joined, ["H.uid"])
        assert per_uid.groups == {(1,): Annotation.count(2), (2,): Annotation.count(3)}
        assert aggregate(joined, []).groups[()] == Annotation.count(5)

    def test_single_relation_plan_is_plain_aggregate(self, retail):
        plan = plan_for(retail, "total_ad_cost")
        assert pushdown_aggregate(plan, retail.db, {}).finalized() == {(): 1100.0}

    def test_q3_pushdown_matches_materialized(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        tables = equal_on_v(retail)
        assert pushdown_aggregate(plan, retail.db, tables).finalized() == evaluate(
            plan, retail.db, tables
        ).finalized()


class TestPartialView:
    def test_q3_view_over_v(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        view = partial_view(plan, retail.db, "V", equal_on_v(retail))
        assert view.parent_relation == "U"
        assert view.total_groups == 2
        assert [g.key for g in view.groups] == [(1,), (2,)]
        assert [g.parent_value for g in view.groups] == [20.0, 50.0]
        assert [[(m.row_id, m.weight) for m in g.members] for g in view.groups] == [
            [(0, 0.5), (1, 0.5)],
            [(2, 1.0)],
        ]

    def test_sampling_truncation(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        view = partial_view(plan, retail.db, "V", equal_on_v(retail), sample_n=1)
        assert [g.key for g in view.groups] == [(1,)]
        assert view.total_groups == 2
        assert not view.end_of_data

    def test_pagination(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        page = partial_view(plan, retail.db, "V", equal_on_v(retail), sample_n=10, offset=1)
        assert [g.key for g in page.groups] == [(2,)]
        assert page.end_of_data
        beyond = partial_view(plan, retail.db, "V", equal_on_v(retail), sample_n=10, offset=100)
        assert beyond.groups == [] and beyond.end_of_data

    def test_empty_frontier(self, retail):
        db = retail.db
        empty_v = db["V"].with_rows([])
        db2 = type(db)(relations={**db.relations, "V": empty_v})
        plan = plan_for(retail, "total_revenue", ["A.source"])
        wt = weighing.identity_table(empty_v, ("uid",))
        view = partial_view(plan, db2, "V", {"V": wt})
        assert view.groups == [] and view.total_groups == 0

    def test_errors(self, retail):
        plan = plan_for(retail, "total_revenue", ["A.source"])
        with pytest.raises(UnknownRelation):
            partial_view(plan, retail.db, "P", equal_on_v(retail))
        with pytest.raises(RangeError):
            partial_view(plan, retail.db, "V", equal_on_v(retail), offset=-1)


# randomized equivalence --------------------------------------------------------

def test_pushdown_equals_materialized_equals_oracle():
    """All five aggregate kinds, random acyclic instances: the factorized
    route, the materialized route, and the independent nested-loop oracle
    agree on every group and the not-selected total."""
    rng = random.Random(101)
    for _ in range(120):
        db, graph, plan, tables = make_instance(
            rng, aggs=("COUNT", "SUM", "AVG", "MAX", "MIN")
        )
        got = evaluate(plan, db, tables)
        pushed = pushdown_aggregate(plan, db, tables)
        entries = {name: wt.entries for name, wt in tables.items()}
        oracle_groups, oracle_ns = oracles.materialized_eval(db, plan, entries)
        agg = plan.metric.agg.value
        assert oracles.result_matches(agg, got, oracle_groups, oracle_ns), agg
        assert oracles.result_matches(agg, pushed, oracle_groups, oracle_ns), agg


def test_join_bilinearity_on_shared_keys():
    """Inner-join counts: aggregating before the join never changes the
    per-key totals (the general form of the partial-aggregation table)."""
    rng = random.Random(202)
    schema_l = Schema("L", (("k", ColType.INT), ("x", ColType.INT)))
    schema_r = Schema("R", (("k", ColType.INT), ("y", ColType.INT)))
    for _ in range(40):
        lrows = [
            Row(i, (rng.randint(1, 3) if rng.random() > 0.1 else None, rng.randint(0, 5)))
            for i in range(rng.randint(0, 20))
        ]
        rrows = [
            Row(i, (rng.randint(1, 3) if rng.random() > 0.1 else None, rng.randint(0, 5)))
            for i in range(rng.randint(0, 20))
        ]
        left = counted(AnnotatedRelation(schema=schema_l, rows=lrows))
        right = counted(AnnotatedRelation(schema=schema_r, rows=rrows))
        direct = aggregate(
            join(qualify(left), qualify(right), [("L.k", "R.k")], mode="inner"),
            ["L.k"],
        )
        partial = aggregate(
            join(
                project_aggregate(qualify(left), ["L.k"]),
                project_aggregate(qualify(right), ["R.k"]),
                [("L.k", "R.k")],
                mode="inner",
            ),
            ["L.k"],
        )
        assert direct.groups == partial.groups


def test_outer_join_conservation_when_partials_are_one():
    """With a one-annotated right side whose per-key partials are all one,
    the left total is conserved across the outer join."""
    rng = random.Random(303)
    for _ in range(40):
        db, graph, plan, tables = make_instance(rng, aggs=("SUM", "COUNT"))
        if not plan.steps:
            continue
        res = evaluate(plan, db, tables)
        base = evaluate(
            resolve(ExploratoryQuery(base=plan.query.base), graph, db), db, {}
        )
        lhs = res.total()
        if res.not_selected_total is not None:
            lhs = sr_add(lhs, res.not_selected_total)
        assert oracles.scalar_close(plan.metric.agg.value, lhs.value, base.groups[()].value)


def test_selection_partition_identity():
    """selected-total + not-selected-total always equals the unfiltered
    total, NULL predicate values landing in not-selected."""
    rng = random.Random(404)
    checked = 0
    while checked < 40:
        db, graph, plan, tables = make_instance(rng, aggs=("COUNT", "SUM", "AVG"))
        if plan.selection is None:
            continue
        checked += 1
        res = evaluate(plan, db, tables)
        # keep the join shape identical: relations the selection pulled in
        # stay joined via extra_relations once the predicate is dropped
        sel_rels = tuple({a.split(".", 1)[0] for a in plan.selection.attrs})
        unfiltered_q = ExploratoryQuery(
            base=plan.query.base,
            group_by=plan.query.group_by,
            selection=None,
            extra_relations=plan.query.extra_relations + sel_rels,
        )
        unfiltered = evaluate(resolve(unfiltered_q, graph, db), db, tables)
        combined = sr_add(res.total(), res.not_selected_total)
        assert oracles.scalar_close(
            plan.metric.agg.value, combined.value, unfiltered.total().value
        )
