"""Analyst-facing declarations: metrics, base queries, exploratory queries,
and their resolution into executable plans over a join graph.

A base query fixes a metric's intended duplication level (the join set the
data engineer declared); an exploratory query reuses the metric with extra
group-bys, selections, and enrichment joins, which is where fanout creeps in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import join_graph as jg
from .errors import UnknownAttribute, UnknownMetric, UnknownRelation
from .relation import Database
from .semiring import SemiringKind


class Agg(Enum):
    SUM = "SUM"
    COUNT = "COUNT"
    AVG = "AVG"
    MAX = "MAX"
    MIN = "MIN"


_AGG_KIND = {
    Agg.SUM: SemiringKind.SUM_REAL,
    Agg.COUNT: SemiringKind.COUNT,
    Agg.AVG: SemiringKind.AVG,
    Agg.MAX: SemiringKind.MAX_TROPICAL,
    Agg.MIN: SemiringKind.MIN_TROPICAL,
}


def split_qualified(attr: str) -> tuple:
    """'I.price' -> ('I', 'price')."""
    if "." not in attr:
        raise UnknownAttribute(
            f"attribute {attr!r} must be qualified as relation.attribute",
            attribute=attr,
        )
    rel, name = attr.split(".", 1)
    return rel, name


@dataclass(frozen=True)
class Metric:
    name: str
    agg: Agg
    payload: str  # qualified attribute, or "*" for COUNT

    def __post_init__(self):
        if self.payload == "*" and self.agg is not Agg.COUNT:
            raise UnknownMetric(
                f"metric {self.name!r}: payload '*' is only valid for COUNT",
                metric=self.name,
            )

    @property
    def kind(self) -> SemiringKind:
        return _AGG_KIND[self.agg]

    @property
    def payload_relation(self) -> Optional[str]:
        if self.payload == "*":
            return None
        return split_qualified(self.payload)[0]

    @property
    def payload_attr(self) -> Optional[str]:
        if self.payload == "*":
            return None
        return split_qualified(self.payload)[1]


@dataclass(frozen=True)
class BaseQuery:
    """The engineer-declared duplication level: metric plus the join set
    whose fanout is intentional. The first relation is the designated fact
    table (COUNT's payload level)."""

    metric: Metric
    relations: tuple

    def __post_init__(self):
        payload_rel = self.metric.payload_relation
        if payload_rel is not None and payload_rel not in self.relations:
            raise UnknownRelation(
                f"metric {self.metric.name!r} payload relation {payload_rel!r} "
                f"is not in the base query relations {list(self.relations)}",
                relation=payload_rel,
            )

    @property
    def fact_table(self) -> str:
        return self.metric.payload_relation or self.relations[0]


_OPS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class Atom:
    attr: str  # qualified
    op: str
    literal: object

    def __post_init__(self):
        if self.op not in _OPS:
            raise UnknownAttribute(f"unknown operator {self.op!r}", op=self.op)

    def satisfied_by(self, value) -> bool:
        """NULL satisfies nothing, not even '=' against NULL."""
        if value is None:
            return False
        return _OPS[self.op](value, self.literal)


@dataclass(frozen=True)
class Predicate:
    """Conjunction of atoms."""

    atoms: tuple

    @property
    def attrs(self) -> list:
        return [a.attr for a in self.atoms]


@dataclass(frozen=True)
class ExploratoryQuery:
    base: BaseQuery
    group_by: tuple = ()
    selection: Optional[Predicate] = None
    #: relations joined for enrichment without being referenced by group_by
    #: or selection (feature joins for sampling/ML style queries)
    extra_relations: tuple = ()


@dataclass
class QueryPlan:
    """Everything evaluate/check need, precomputed and deterministic."""

    query: ExploratoryQuery
    steps: list  # ordered TreeSteps over the full subtree
    targets: list  # of WeighTarget, traversal order
    root: str
    nodes: list  # all plan relations, root first then traversal order
    base_steps: list  # ordered TreeSteps over the base-only subtree
    base_root: str
    base_nodes: list

    @property
    def metric(self) -> Metric:
        return self.query.base.metric

    @property
    def group_by(self) -> tuple:
        return self.query.group_by

    @property
    def selection(self) -> Optional[Predicate]:
        return self.query.selection

    @property
    def payload_relation(self) -> Optional[str]:
        return self.metric.payload_relation


def referenced_relations(q: ExploratoryQuery) -> set:
    refs = set(q.base.relations)
    for attr in q.group_by:
        refs.add(split_qualified(attr)[0])
    if q.selection:
        for attr in q.selection.attrs:
            refs.add(split_qualified(attr)[0])
    refs.update(q.extra_relations)
    return refs


def _check_attrs(q: ExploratoryQuery, db: Database) -> None:
    attrs = list(q.group_by)
    if q.selection:
        attrs.extend(q.selection.attrs)
    for attr in attrs:
        rel, name = split_qualified(attr)
        if rel not in db:
            raise UnknownAttribute(
                f"attribute {attr!r} references unknown relation {rel!r}",
                attribute=attr,
            )
        if not db[rel].schema.has(name):
            raise UnknownAttribute(
                f"relation {rel!r} has no attribute {name!r}", attribute=attr
            )


def resolve(
    q: ExploratoryQuery, graph: jg.JoinGraph, db: Optional[Database] = None
) -> QueryPlan:
    """Plan the query: minimal subtree over base plus referenced relations,
    depth-first from the base, and the weighing targets along it.

    Tropical metrics (MAX/MIN) yield no targets: max(1,...,1) = 1 holds
    natively, so fanout cannot distort them.
    """
    if db is not None:
        _check_attrs(q, db)
    base = set(q.base.relations)
    required = referenced_relations(q)
    steps = jg.steiner_subtree(graph, required, roots=base)
    base_steps = jg.steiner_subtree(graph, base, roots=base)
    if q.base.metric.kind.scalable:
        targets = jg.weighing_targets(graph, base, steps)
    else:
        targets = []
    root = _plan_root(base, steps)
    base_root = _plan_root(base, base_steps)
    nodes = [root] + [s.child for s in steps]
    base_nodes = [base_root] + [s.child for s in base_steps]
    return QueryPlan(
        query=q,
        steps=steps,
        targets=targets,
        root=root,
        nodes=nodes,
        base_steps=base_steps,
        base_root=base_root,
        base_nodes=base_nodes,
    )


def _plan_root(base: set, steps: list) -> str:
    if steps:
        return steps[0].parent
    return sorted(base)[0]


def base_only_plan(plan: QueryPlan) -> QueryPlan:
    """The plan that computes Q_base: same metric and duplication set, no
    group-by, no selection, no extra joins."""
    q = ExploratoryQuery(base=plan.query.base)
    return QueryPlan(
        query=q,
        steps=plan.base_steps,
        targets=[],
        root=plan.base_root,
        nodes=list(plan.base_nodes),
        base_steps=plan.base_steps,
        base_root=plan.base_root,
        base_nodes=list(plan.base_nodes),
    )


# Semantic-layer file ----------------------------------------------------------

@dataclass
class SemanticLayer:
    metrics: dict  # name -> Metric
    base_queries: dict = field(default_factory=dict)  # metric name -> BaseQuery

    def base_query(self, metric_name: str) -> BaseQuery:
        if metric_name not in self.base_queries:
            raise UnknownMetric(
                f"unknown metric {metric_name!r}; known: {sorted(self.base_queries)}",
                metric=metric_name,
            )
        return self.base_queries[metric_name]


def layer_from_json(doc: dict) -> SemanticLayer:
    metrics = {}
    for m in doc.get("metrics", []):
        metric = Metric(name=m["name"], agg=Agg(m["agg"]), payload=m["payload"])
        metrics[metric.name] = metric
    base_queries = {}
    for b in doc.get("base_queries", []):
        name = b["metric"]
        if name not in metrics:
            raise UnknownMetric(f"base query references unknown metric {name!r}", metric=name)
        base_queries[name] = BaseQuery(metric=metrics[name], relations=tuple(b["relations"]))
    return SemanticLayer(metrics=metrics, base_queries=base_queries)


def load_semantic_layer(path) -> SemanticLayer:
    with open(path, encoding="utf-8") as f:
        return layer_from_json(json.load(f))


def atom_from_json(doc: dict) -> Atom:
    return Atom(attr=doc["attr"], op=doc["op"], literal=doc["value"])


def predicate_from_json(atoms: list) -> Optional[Predicate]:
    if not atoms:
        return None
    return Predicate(atoms=tuple(atom_from_json(a) for a in atoms))
