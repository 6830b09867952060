"""Evaluation of annotated relational algebra.

Group-by folds annotations with semiring add; joins combine them with
semiring mul. Left outer joins pad an unmatched left row with the right
relation's null-row annotation: one for ordinary relations (the row
survives untouched), zero for the metric's payload relation (a missing
payload contributes nothing, exactly like SQL aggregates skipping NULL).

Two execution paths produce identical results: `evaluate` materializes the
join chain, `pushdown_aggregate` pre-aggregates every relation onto its
join keys plus referenced attributes first, which is what turns
many-to-many joins into one-to-many joins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import semiring, weighing
from .errors import (
    BadJoinAttr,
    KindMismatch,
    MissingAttribute,
    MissingWeights,
    RangeError,
    UnknownAttribute,
    UnknownRelation,
)
from .relation import AnnotatedRelation, Database, Row, Schema, annotate_for_metric
from .semantic_model import Predicate, QueryPlan, split_qualified
from .semiring import Annotation, SemiringKind, sr_add, sr_finalize, sr_mul


def _null_last(key: tuple) -> tuple:
    """Sort key for group tuples: ascending values, NULLs after everything."""
    return tuple((1, "") if v is None else (0, v) for v in key)


@dataclass
class GroupedResult:
    keys: list  # qualified attribute names
    groups: dict  # key tuple -> Annotation
    kind: SemiringKind
    not_selected_total: Optional[Annotation] = None

    def total(self) -> Annotation:
        acc = semiring.zero(self.kind)
        for ann in self.groups.values():
            acc = sr_add(acc, ann)
        return acc

    def finalized(self) -> dict:
        return {k: sr_finalize(v) for k, v in self.groups.items()}

    def sorted_items(self) -> list:
        return sorted(self.groups.items(), key=lambda kv: _null_last(kv[0]))

    def to_json(self) -> dict:
        return {
            "keys": list(self.keys),
            "rows": [
                {"key": list(k), "value": sr_finalize(ann)}
                for k, ann in self.sorted_items()
            ],
            "not_selected_total": (
                sr_finalize(self.not_selected_total)
                if self.not_selected_total is not None
                else None
            ),
        }


def qualify(rel: AnnotatedRelation) -> AnnotatedRelation:
    """Rename attributes to relation.attribute so joined schemas stay unique."""
    attrs = tuple((f"{rel.name}.{n}", t) for n, t in rel.schema.attributes)
    return AnnotatedRelation(
        schema=Schema(rel.name, attrs),
        rows=rel.rows,
        kind=rel.kind,
        null_row_ann=rel.null_row_ann,
    )


def aggregate(rel: AnnotatedRelation, keys) -> GroupedResult:
    """Eq.-style group-by: each group's annotation is the add-fold of its
    members. NULL key values form their own group. Empty key list yields a
    single global group (zero on an empty relation)."""
    if rel.kind is None:
        raise ValueError(f"relation {rel.name} is not annotated")
    keys = list(keys)
    try:
        idxs = [rel.schema.index(k) for k in keys]
    except MissingAttribute as e:
        raise UnknownAttribute(e.message, **e.details) from None
    groups: dict = {}
    if not keys:
        groups[()] = semiring.zero(rel.kind)
    for row in rel.rows:
        k = tuple(row.values[i] for i in idxs)
        acc = groups.get(k)
        groups[k] = row.ann if acc is None else sr_add(acc, row.ann)
    return GroupedResult(keys=keys, groups=groups, kind=rel.kind)


def project_aggregate(rel: AnnotatedRelation, attrs) -> AnnotatedRelation:
    """Partial aggregation: collapse the relation onto `attrs`, folding
    annotations, one output row per distinct tuple. The null-row annotation
    is preserved so outer-join padding stays equivalent to the materialized
    plan."""
    attrs = list(attrs)
    idxs = [rel.schema.index(a) for a in attrs]
    groups: dict = {}
    if not attrs and not rel.rows:
        groups[()] = semiring.zero(rel.kind)
    for row in rel.rows:
        k = tuple(row.values[i] for i in idxs)
        acc = groups.get(k)
        groups[k] = row.ann if acc is None else sr_add(acc, row.ann)
    schema = Schema(rel.name, tuple(rel.schema.attributes[i] for i in idxs))
    rows = [
        Row(row_id, k, ann)
        for row_id, (k, ann) in enumerate(
            sorted(groups.items(), key=lambda kv: _null_last(kv[0]))
        )
    ]
    return AnnotatedRelation(
        schema=schema, rows=rows, kind=rel.kind, null_row_ann=rel.null_row_ann
    )


def join(
    left: AnnotatedRelation,
    right: AnnotatedRelation,
    on,
    mode: str = "left_outer",
) -> AnnotatedRelation:
    """Hash join with annotation products. NULL keys never match. In
    left_outer mode unmatched left rows survive, padded with NULLs and
    multiplied by the right relation's null-row annotation."""
    if mode not in ("inner", "left_outer"):
        raise ValueError(f"unknown join mode {mode!r}")
    if left.kind is not right.kind:
        raise KindMismatch(
            f"join of {left.name} ({left.kind}) with {right.name} ({right.kind})",
            left=str(left.kind),
            right=str(right.kind),
        )
    try:
        l_idxs = [left.schema.index(a) for a, _ in on]
        r_attrs = [b for _, b in on]
    except MissingAttribute as e:
        raise BadJoinAttr(e.message, **e.details) from None
    try:
        table = right.index_on(r_attrs)
    except MissingAttribute as e:
        raise BadJoinAttr(e.message, **e.details) from None

    kind = left.kind
    pad_ann = right.null_row_ann or semiring.one(kind)
    pad_values = (None,) * len(right.schema.attributes)
    out_schema = Schema(
        f"({left.name}*{right.name})",
        tuple(left.schema.attributes) + tuple(right.schema.attributes),
    )
    rows = []
    rid = 0
    for lrow in left.rows:
        key = tuple(lrow.values[i] for i in l_idxs)
        matches = None if any(v is None for v in key) else table.get(key)
        if matches:
            for pos in matches:
                rrow = right.rows[pos]
                rows.append(
                    Row(rid, lrow.values + rrow.values, sr_mul(lrow.ann, rrow.ann))
                )
                rid += 1
        elif mode == "left_outer":
            rows.append(Row(rid, lrow.values + pad_values, sr_mul(lrow.ann, pad_ann)))
            rid += 1
    null_row_ann = sr_mul(
        left.null_row_ann or semiring.one(kind), pad_ann
    )
    return AnnotatedRelation(
        schema=out_schema, rows=rows, kind=kind, null_row_ann=null_row_ann
    )


def _prepare(plan: QueryPlan, db: Database, weights: dict, nodes) -> dict:
    """Annotate for the metric, apply weight tables to targets among
    `nodes`, and qualify attribute names."""
    targets_here = [t for t in plan.targets if t.relation in nodes]
    missing = [t.relation for t in targets_here if t.relation not in weights]
    if missing:
        raise MissingWeights(
            f"weighing targets without weight tables: {missing}", targets=missing
        )
    annotated = annotate_for_metric(db, plan.metric)
    target_rels = {t.relation for t in targets_here}
    out = {}
    for n in nodes:
        if n not in annotated.relations:
            raise UnknownRelation(f"plan references unknown relation {n!r}", relation=n)
        rel = annotated[n]
        if n in target_rels:
            rel = weighing.apply(weights[n], rel)
        out[n] = qualify(rel)
    return out


def _join_chain(rels: dict, root: str, steps) -> AnnotatedRelation:
    joined = rels[root]
    for step in steps:
        on = [
            (f"{step.parent}.{p}", f"{step.child}.{c}")
            for p, c in zip(step.parent_attrs, step.child_attrs)
        ]
        joined = join(joined, rels[step.child], on, mode="left_outer")
    return joined


def _row_selected(row: Row, schema: Schema, predicate: Predicate) -> bool:
    for atom in predicate.atoms:
        if not atom.satisfied_by(row.values[schema.index(atom.attr)]):
            return False
    return True


def _needed_attrs(plan: QueryPlan) -> dict:
    """Per relation, the qualified attributes that must survive partial
    aggregation: its join keys in the subtree plus any group-by or selection
    attributes it owns."""
    needed: dict = {n: [] for n in plan.nodes}

    def add(rel, attr):
        q = f"{rel}.{attr}"
        if q not in needed[rel]:
            needed[rel].append(q)

    for step in plan.steps:
        for a in step.parent_attrs:
            add(step.parent, a)
        for a in step.child_attrs:
            add(step.child, a)
    referenced = list(plan.group_by)
    if plan.selection:
        referenced.extend(plan.selection.attrs)
    for qattr in referenced:
        rel, attr = split_qualified(qattr)
        add(rel, attr)
    return needed


def _run(plan: QueryPlan, db: Database, weights: dict, pushdown: bool) -> GroupedResult:
    rels = _prepare(plan, db, weights, plan.nodes)
    if pushdown:
        needed = _needed_attrs(plan)
        rels = {n: project_aggregate(r, needed[n]) for n, r in rels.items()}
    joined = _join_chain(rels, plan.root, plan.steps)
    if plan.selection is None:
        return aggregate(joined, plan.group_by)
    selected, rejected = [], []
    for row in joined.rows:
        (selected if _row_selected(row, joined.schema, plan.selection) else rejected).append(row)
    result = aggregate(joined.with_rows(selected), plan.group_by)
    result.not_selected_total = aggregate(joined.with_rows(rejected), []).groups[()]
    return result


def evaluate(plan: QueryPlan, db: Database, weights: dict) -> GroupedResult:
    """Materialized evaluation: left-outer joins along the depth-first edge
    order rooted at the base, weighed targets pre-scaled, selection applied
    as a two-way partition whose rejected side is kept as a global total."""
    return _run(plan, db, weights, pushdown=False)


def pushdown_aggregate(plan: QueryPlan, db: Database, weights: dict) -> GroupedResult:
    """Factorized evaluation: identical result to `evaluate`, computed by
    pre-aggregating every relation onto its join keys and referenced
    attributes before joining."""
    return _run(plan, db, weights, pushdown=True)


# Nested partial-aggregate views ------------------------------------------------

@dataclass
class MemberRow:
    row_id: int
    values: dict
    weight: Optional[float]


@dataclass
class NestedGroup:
    key: tuple
    parent_value: Optional[float]
    members: list = field(default_factory=list)


@dataclass
class NestedView:
    frontier: str
    join_key: list  # the frontier's own join-key attributes
    parent_relation: str
    parent_keys: list  # qualified parent-side attributes
    groups: list  # of NestedGroup, ascending key order
    total_groups: int
    offset: int
    end_of_data: bool

    def to_json(self) -> dict:
        return {
            "frontier": self.frontier,
            "join_key": list(self.join_key),
            "parent_relation": self.parent_relation,
            "parent_keys": list(self.parent_keys),
            "groups": [
                {
                    "key": list(g.key),
                    "parent_value": g.parent_value,
                    "members": [
                        {"row_id": m.row_id, "values": m.values, "weight": m.weight}
                        for m in g.members
                    ],
                }
                for g in self.groups
            ],
            "total_groups": self.total_groups,
            "offset": self.offset,
            "end_of_data": self.end_of_data,
        }


def partial_view(
    plan: QueryPlan,
    db: Database,
    frontier: str,
    weights: dict,
    sample_n: int = 100,
    offset: int = 0,
) -> NestedView:
    """The weighing companion view for one frontier relation: for each of
    its join-key groups (ascending, sampled), the finalized partial
    aggregate of everything joined so far on the parent side, paired with
    the frontier's member rows and their current weights.

    The parent side is the depth-first prefix before the frontier's entering
    edge, evaluated with the weights decided so far, so the view summarizes
    "the aggregate about to be fanned out" without computing the full join.
    """
    if offset < 0 or sample_n < 1:
        raise RangeError(
            f"offset must be >= 0 and sample size >= 1, got {offset}, {sample_n}",
            offset=offset,
            limit=sample_n,
        )
    enter = None
    for i, step in enumerate(plan.steps):
        if step.child == frontier:
            enter = i
            break
    if enter is None:
        raise UnknownRelation(
            f"{frontier!r} is not a joined relation of this plan", relation=frontier
        )
    step = plan.steps[enter]
    prefix_steps = plan.steps[:enter]
    prefix_nodes = [plan.root] + [s.child for s in prefix_steps]
    rels = _prepare(plan, db, weights, prefix_nodes)
    joined = _join_chain(rels, plan.root, prefix_steps)
    parent_keys = [f"{step.parent}.{a}" for a in step.parent_attrs]
    parent_groups = aggregate(joined, parent_keys).groups

    frontier_rel = db[frontier]
    key_idxs = [frontier_rel.schema.index(a) for a in step.child_attrs]
    member_groups: dict = {}
    for row in frontier_rel.rows:
        k = tuple(row.values[i] for i in key_idxs)
        member_groups.setdefault(k, []).append(row)

    wt = weights.get(frontier)
    keys = sorted(member_groups, key=_null_last)
    total = len(keys)
    page = keys[offset : offset + sample_n]
    zero_scalar = sr_finalize(semiring.zero(plan.metric.kind))
    groups = []
    for k in page:
        ann = parent_groups.get(k)
        parent_value = sr_finalize(ann) if ann is not None else zero_scalar
        members = [
            MemberRow(
                row_id=r.row_id,
                values=dict(zip(frontier_rel.schema.names, r.values)),
                weight=(float(wt.entries[r.row_id]) if wt and r.row_id in wt.entries else None),
            )
            for r in member_groups[k]
        ]
        groups.append(NestedGroup(key=k, parent_value=parent_value, members=members))
    return NestedView(
        frontier=frontier,
        join_key=list(step.child_attrs),
        parent_relation=step.parent,
        parent_keys=parent_keys,
        groups=groups,
        total_groups=total,
        offset=offset,
        end_of_data=offset + len(page) >= total,
    )
