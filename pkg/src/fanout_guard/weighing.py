"""Weighing strategies and weight tables.

A weight table assigns each row of one relation a non-negative rational
weight such that weights sum to 1 within every non-NULL join-key group.
Applying a valid table makes the relation's per-key partial aggregate of a
one-annotated copy equal the semiring one, which is exactly the condition
that neutralizes join fanout.

All arithmetic is exact: weights are fractions.Fraction, so group sums of
the built-in strategies equal 1 exactly, and count-semiring results stay
rational end to end.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from . import semiring
from .errors import (
    MissingOrderAttr,
    MissingRowId,
    NonPositiveProportionalValue,
    UnsupportedScale,
)
from .relation import AnnotatedRelation, Row
from .semiring import WeightLike, as_fraction


@dataclass(frozen=True)
class Equal:
    """Each of the n rows in a join-key group gets 1/n."""


@dataclass(frozen=True)
class OrderBased:
    """The first (or last) row ordered by `attr` gets 1, the rest 0.
    Ties break by ascending row id."""

    attr: str
    pick: str = "last"

    def __post_init__(self):
        if self.pick not in ("first", "last"):
            raise ValueError(f"pick must be 'first' or 'last', got {self.pick!r}")


@dataclass(frozen=True)
class PositionBased:
    """U-shaped: first row gets first_w, last gets last_w, the middle rows
    share the remainder equally. Degenerate groups: n=1 gets 1; n=2 tops up
    each endpoint by half the middle mass (preserves the first/last
    asymmetry and sums to exactly 1)."""

    attr: str
    first_w: WeightLike = Fraction(2, 5)
    last_w: WeightLike = Fraction(2, 5)

    def __post_init__(self):
        fw, lw = as_fraction(self.first_w), as_fraction(self.last_w)
        if fw < 0 or lw < 0 or fw + lw > 1:
            raise ValueError(
                f"position weights need first_w >= 0, last_w >= 0, "
                f"first_w + last_w <= 1; got {fw}, {lw}"
            )


@dataclass(frozen=True)
class Proportional:
    """Weights proportional to a strictly positive numeric attribute."""

    attr: str


@dataclass(frozen=True)
class Custom:
    """Entries taken verbatim; keyed by row id."""

    entries: dict  # row_id -> WeightLike


WeighingStrategy = Union[Equal, OrderBased, PositionBased, Proportional, Custom]


@dataclass
class WeightTable:
    relation: str
    join_key: tuple
    entries: dict  # row_id -> Fraction
    strategy: Optional[str] = None  # human-readable provenance for reports

    def weight_of(self, row_id: int) -> Fraction:
        return self.entries[row_id]


@dataclass
class GroupViolation:
    key: tuple
    total: float


@dataclass
class WeightValidation:
    ok: bool
    violations: list  # of GroupViolation
    missing_rows: list
    null_key_groups: int  # informational: groups exempt because they never join
    weights_over_one: int  # informational: custom weights above 1 are allowed

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"key": list(v.key), "total": v.total} for v in self.violations
            ],
            "missing_rows": self.missing_rows,
            "null_key_groups": self.null_key_groups,
            "weights_over_one": self.weights_over_one,
        }


def _groups(rel: AnnotatedRelation, join_key) -> dict:
    idxs = [rel.schema.index(a) for a in join_key]
    groups: dict = {}
    for row in rel.rows:
        k = tuple(row.values[i] for i in idxs)
        groups.setdefault(k, []).append(row)
    return groups


def _order_value(row: Row, idx: int):
    v = row.values[idx]
    # NULLs sort first so they are deterministic but never win "last"
    return (0, "") if v is None else (1, v)


def build(strategy: WeighingStrategy, rel: AnnotatedRelation, join_key) -> WeightTable:
    """Construct the weight table for one strategy over one relation."""
    join_key = tuple(join_key)
    entries: dict = {}

    if isinstance(strategy, Custom):
        for row in rel.rows:
            if row.row_id not in strategy.entries:
                raise MissingRowId(
                    f"custom weight table for {rel.name} misses row_id {row.row_id}",
                    relation=rel.name,
                    row_id=row.row_id,
                )
            entries[row.row_id] = as_fraction(strategy.entries[row.row_id])
        return WeightTable(rel.name, join_key, entries, strategy="custom")

    if isinstance(strategy, (OrderBased, PositionBased, Proportional)):
        if not rel.schema.has(strategy.attr):
            raise MissingOrderAttr(
                f"relation {rel.name} has no attribute {strategy.attr!r}",
                relation=rel.name,
                attribute=strategy.attr,
            )

    groups = _groups(rel, join_key)
    if isinstance(strategy, Equal):
        for rows in groups.values():
            w = Fraction(1, len(rows))
            for row in rows:
                entries[row.row_id] = w
        label = "equal"
    elif isinstance(strategy, OrderBased):
        idx = rel.schema.index(strategy.attr)
        for rows in groups.values():
            ordered = sorted(rows, key=lambda r: (_order_value(r, idx), r.row_id))
            winner = ordered[0] if strategy.pick == "first" else ordered[-1]
            for row in rows:
                entries[row.row_id] = Fraction(1 if row is winner else 0)
        label = f"order:{strategy.attr}:{strategy.pick}"
    elif isinstance(strategy, PositionBased):
        idx = rel.schema.index(strategy.attr)
        fw, lw = as_fraction(strategy.first_w), as_fraction(strategy.last_w)
        rest = 1 - fw - lw
        for rows in groups.values():
            ordered = sorted(rows, key=lambda r: (_order_value(r, idx), r.row_id))
            n = len(ordered)
            if n == 1:
                entries[ordered[0].row_id] = Fraction(1)
            elif n == 2:
                entries[ordered[0].row_id] = fw + rest / 2
                entries[ordered[1].row_id] = lw + rest / 2
            else:
                share = rest / (n - 2)
                entries[ordered[0].row_id] = fw
                entries[ordered[-1].row_id] = lw
                for row in ordered[1:-1]:
                    entries[row.row_id] = share
        label = f"position:{strategy.attr}:{float(fw)}:{float(lw)}"
    elif isinstance(strategy, Proportional):
        idx = rel.schema.index(strategy.attr)
        for rows in groups.values():
            values = []
            for row in rows:
                v = row.values[idx]
                if v is None or v <= 0:
                    raise NonPositiveProportionalValue(
                        f"row {row.row_id} of {rel.name}: {strategy.attr} = {v!r} "
                        f"is not strictly positive",
                        relation=rel.name,
                        row_id=row.row_id,
                        value=v,
                    )
                values.append(as_fraction(v))
            total = sum(values)
            for row, v in zip(rows, values):
                entries[row.row_id] = v / total
        label = f"prop:{strategy.attr}"
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    return WeightTable(rel.name, join_key, entries, strategy=label)


def validate(
    wt: WeightTable, rel: AnnotatedRelation, tolerance: float = 1e-9
) -> WeightValidation:
    """Coverage plus the sum-to-1 sanity check per non-NULL join-key group.

    NULL-keyed groups never join, so they are exempt from the sum check and
    only counted informationally. Weights above 1 are permitted (custom
    tables may oversample) but flagged. Negative weights always violate.
    """
    missing = [r.row_id for r in rel.rows if r.row_id not in wt.entries]
    violations = []
    null_groups = 0
    over_one = sum(1 for w in wt.entries.values() if w > 1)
    for key, rows in _groups(rel, wt.join_key).items():
        weights = [wt.entries[r.row_id] for r in rows if r.row_id in wt.entries]
        if any(w < 0 for w in weights):
            violations.append(GroupViolation(key=key, total=float(sum(weights))))
            continue
        if any(v is None for v in key):
            null_groups += 1
            continue
        total = sum(weights)
        if abs(total - 1) > tolerance or len(weights) != len(rows):
            violations.append(GroupViolation(key=key, total=float(total)))
    ok = not violations and not missing
    return WeightValidation(
        ok=ok,
        violations=violations,
        missing_rows=missing,
        null_key_groups=null_groups,
        weights_over_one=over_one,
    )


def apply(wt: WeightTable, rel: AnnotatedRelation) -> AnnotatedRelation:
    """Scale each row's annotation by its weight; tuples unchanged."""
    if rel.kind is not None and not rel.kind.scalable:
        raise UnsupportedScale(
            f"cannot weigh {rel.kind.value}-annotated relation {rel.name}",
            relation=rel.name,
            kind=rel.kind.value,
        )
    rows = []
    for row in rel.rows:
        w = wt.entries.get(row.row_id)
        if w is None:
            raise MissingRowId(
                f"weight table for {rel.name} misses row_id {row.row_id}",
                relation=rel.name,
                row_id=row.row_id,
            )
        rows.append(Row(row.row_id, row.values, semiring.sr_scale(row.ann, w)))
    return rel.with_rows(rows)


def identity_table(rel: AnnotatedRelation, join_key) -> WeightTable:
    """All weights 1: the unweighed (fanout-exposing) run. Fails the
    sum-to-1 check wherever a group has more than one row, by design."""
    return WeightTable(
        rel.name,
        tuple(join_key),
        {r.row_id: Fraction(1) for r in rel.rows},
        strategy="unweighed",
    )


# Strategy wire format --------------------------------------------------------

def strategy_from_spec(spec: dict) -> WeighingStrategy:
    """JSON strategy spec -> strategy object.

    {"type": "equal"} | {"type": "order", "attr": a, "pick": "first"|"last"}
    | {"type": "position", "attr": a, "first_w": w, "last_w": w}
    | {"type": "proportional", "attr": a}
    | {"type": "custom", "entries": {row_id: weight}}
    """
    t = spec.get("type")
    if t == "equal":
        return Equal()
    if t == "order":
        return OrderBased(attr=spec["attr"], pick=spec.get("pick", "last"))
    if t == "position":
        return PositionBased(
            attr=spec["attr"],
            first_w=spec.get("first_w", "0.4"),
            last_w=spec.get("last_w", "0.4"),
        )
    if t == "proportional":
        return Proportional(attr=spec["attr"])
    if t == "custom":
        entries = {int(k): v for k, v in spec["entries"].items()}
        return Custom(entries=entries)
    raise ValueError(f"unknown strategy type {t!r}")


def strategy_to_spec(strategy: WeighingStrategy) -> dict:
    if isinstance(strategy, Equal):
        return {"type": "equal"}
    if isinstance(strategy, OrderBased):
        return {"type": "order", "attr": strategy.attr, "pick": strategy.pick}
    if isinstance(strategy, PositionBased):
        return {
            "type": "position",
            "attr": strategy.attr,
            "first_w": str(as_fraction(strategy.first_w)),
            "last_w": str(as_fraction(strategy.last_w)),
        }
    if isinstance(strategy, Proportional):
        return {"type": "proportional", "attr": strategy.attr}
    if isinstance(strategy, Custom):
        return {
            "type": "custom",
            "entries": {str(k): str(v) for k, v in strategy.entries.items()},
        }
    raise TypeError(f"unknown strategy {strategy!r}")


def load_weight_entries(path) -> dict:
    """Read a (row_id, weight) table from CSV or JSON; weights parse as
    exact decimals."""
    path = str(path)
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        return {int(k): v for k, v in doc.items()}
    entries = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if [h.strip() for h in header] != ["row_id", "weight"]:
            raise MissingRowId(
                f"{path}: weight table header must be row_id,weight", path=path
            )
        for cells in reader:
            entries[int(cells[0])] = cells[1]
    return entries
