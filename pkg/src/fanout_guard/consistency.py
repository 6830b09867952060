"""The formal consistency check and the fanout diagnosis behind it.

A query is consistent when its grouped totals (plus the rejected side of
any selection) reproduce the base query's total. The sufficient condition
is that every joined relation's weighted per-join-key partial aggregate of
a one-annotated copy equals the semiring one; `diagnose` lists the groups
where it does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import engine, semiring, weighing
from .relation import Database, Row
from .semantic_model import QueryPlan, base_only_plan
from .semiring import Annotation, SemiringKind, annotations_close, sr_add, sr_finalize

#: groups shown per relation in reports, worst deviation first
TOP_K_GROUPS = 10


@dataclass
class FanoutFinding:
    relation: str
    join_key: tuple
    groups: list  # of (key tuple, partial scalar), worst first, top-k
    total_groups_off: int

    def to_json(self) -> dict:
        return {
            "relation": self.relation,
            "join_key": list(self.join_key),
            "groups": [{"key": list(k), "partial": p} for k, p in self.groups],
            "total_groups_off": self.total_groups_off,
        }


@dataclass
class ConsistencyReport:
    verdict: str  # "Consistent" | "Inconsistent"
    base_total: Optional[float]
    query_total: Optional[float]
    not_selected_total: Optional[float]
    per_relation_fanout: list = field(default_factory=list)
    tolerance: float = 1e-9

    @property
    def consistent(self) -> bool:
        return self.verdict == "Consistent"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "base_total": self.base_total,
            "query_total": self.query_total,
            "not_selected_total": self.not_selected_total,
            "per_relation_fanout": [f.to_json() for f in self.per_relation_fanout],
            "tolerance": self.tolerance,
        }


def _partial_scalar(ann: Annotation) -> float:
    """Scalar view of a weighted one-fold for display: the count component
    for AVG, the plain value otherwise."""
    if ann.kind is SemiringKind.AVG:
        return ann.value[0]
    return float(ann.value)


def diagnose(plan: QueryPlan, db: Database, weights: dict, tolerance: float = 1e-9) -> list:
    """For each weighing target under its current weights, the join-key
    groups whose weighted partial aggregate of a one-annotated copy differs
    from one. Empty means the sufficient condition for consistency holds."""
    kind = plan.metric.kind
    unit = semiring.one(kind)
    findings = []
    for target in plan.targets:
        rel = db[target.relation]
        ones = rel.with_rows(
            [Row(r.row_id, r.values, unit) for r in rel.rows], kind=kind
        )
        wt = weights.get(target.relation)
        if wt is None:
            wt = weighing.identity_table(ones, target.join_key)
        weighed = weighing.apply(wt, ones)
        partials = engine.aggregate(weighed, list(target.join_key))
        off = []
        for key, ann in partials.groups.items():
            if any(v is None for v in key):
                continue  # NULL keys never join
            if not annotations_close(ann, unit, tolerance):
                off.append((key, _partial_scalar(ann)))
        if off:
            off.sort(key=lambda kp: abs(kp[1] - 1.0), reverse=True)
            findings.append(
                FanoutFinding(
                    relation=target.relation,
                    join_key=target.join_key,
                    groups=off[:TOP_K_GROUPS],
                    total_groups_off=len(off),
                )
            )
    return findings


def check(
    plan: QueryPlan, db: Database, weights: dict, tolerance: float = 1e-9
) -> ConsistencyReport:
    """Verdict on the defining identity: query total (plus the not-selected
    total when a selection is present) equals the base total. Exact for
    counts, relative tolerance for float carriers; AVG compares the
    (count, sum) pair, not the finalized ratio."""
    result = engine.evaluate(plan, db, weights)
    base = engine.evaluate(base_only_plan(plan), db, {})
    base_ann = base.groups[()]
    query_ann = result.total()
    combined = query_ann
    if result.not_selected_total is not None:
        combined = sr_add(combined, result.not_selected_total)
    verdict = (
        "Consistent" if annotations_close(base_ann, combined, tolerance) else "Inconsistent"
    )
    return ConsistencyReport(
        verdict=verdict,
        base_total=sr_finalize(base_ann),
        query_total=sr_finalize(query_ann),
        not_selected_total=(
            sr_finalize(result.not_selected_total)
            if result.not_selected_total is not None
            else None
        ),
        per_relation_fanout=diagnose(plan, db, weights, tolerance),
        tolerance=tolerance,
    )
