"""Annotated relations: tabular storage, null semantics, CSV ingestion.

Values are plain Python scalars; NULL is None. None never matches a join
key and never satisfies a selection atom, but forms its own group under
group-by. Relations are immutable by convention: every operation returns
a new relation and never mutates rows in place.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from . import semiring
from .errors import CellTypeError, MissingAttribute, NonNumericPayload, ParseError
from .semiring import Annotation, SemiringKind

if TYPE_CHECKING:  # pragma: no cover
    from .semantic_model import Metric

Value = object  # int | float | str | None


class ColType(Enum):
    INT = "int"
    REAL = "real"
    TEXT = "text"

    @property
    def numeric(self) -> bool:
        return self in (ColType.INT, ColType.REAL)


@dataclass(frozen=True)
class Schema:
    relation_name: str
    attributes: tuple  # of (name, ColType)

    def __post_init__(self):
        names = [n for n, _ in self.attributes]
        if len(set(names)) != len(names):
            raise ParseError(
                f"duplicate attribute names in schema of {self.relation_name}",
                relation=self.relation_name,
            )

    @property
    def names(self) -> list:
        return [n for n, _ in self.attributes]

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.attributes):
            if n == name:
                return i
        raise MissingAttribute(
            f"relation {self.relation_name} has no attribute {name!r}",
            relation=self.relation_name,
            attribute=name,
        )

    def type_of(self, name: str) -> ColType:
        return self.attributes[self.index(name)][1]

    def has(self, name: str) -> bool:
        return any(n == name for n, _ in self.attributes)


@dataclass(frozen=True)
class Row:
    row_id: int
    values: tuple
    ann: Optional[Annotation] = None


@dataclass
class AnnotatedRelation:
    schema: Schema
    rows: list  # of Row
    kind: Optional[SemiringKind] = None
    #: annotation of the implicit all-NULL row used to pad unmatched partners
    #: in a left outer join; one for ordinary relations, zero when this
    #: relation carries the metric payload (a missing payload contributes
    #: nothing, mirroring SQL aggregates skipping NULL).
    null_row_ann: Optional[Annotation] = None
    _key_index: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def name(self) -> str:
        return self.schema.relation_name

    def __len__(self) -> int:
        return len(self.rows)

    def index_on(self, attrs: Sequence[str]) -> dict:
        """Hash index: key tuple -> list of row positions. Rows with any
        NULL key component are excluded (they never match)."""
        key = tuple(attrs)
        cached = self._key_index.get(key)
        if cached is not None:
            return cached
        idxs = [self.schema.index(a) for a in attrs]
        table: dict = {}
        for pos, row in enumerate(self.rows):
            k = tuple(row.values[i] for i in idxs)
            if any(v is None for v in k):
                continue
            table.setdefault(k, []).append(pos)
        self._key_index[key] = table
        return table

    def with_rows(self, rows: list, **overrides) -> "AnnotatedRelation":
        return AnnotatedRelation(
            schema=overrides.get("schema", self.schema),
            rows=rows,
            kind=overrides.get("kind", self.kind),
            null_row_ann=overrides.get("null_row_ann", self.null_row_ann),
        )


@dataclass
class Database:
    relations: dict  # name -> AnnotatedRelation
    #: payload rows whose metric attribute was NULL (annotated zero, kept);
    #: filled by annotate_for_metric so callers can surface it.
    null_payload_count: int = 0

    def __getitem__(self, name: str) -> AnnotatedRelation:
        return self.relations[name]

    def __contains__(self, name: str) -> bool:
        return name in self.relations


def _parse_cell(raw: str, col_type: ColType, row_no: int, col: str) -> Value:
    if col_type is ColType.TEXT:
        return raw
    try:
        if col_type is ColType.INT:
            return int(raw)
        return float(raw)
    except ValueError:
        raise CellTypeError(
            f"row {row_no}, column {col!r}: cannot parse {raw!r} as {col_type.value}",
            row=row_no,
            column=col,
            value=raw,
            expected=col_type.value,
        ) from None


def _read_rows(reader, schema: Schema, null_token: str, source: str) -> list:
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{source}: empty input, header row required", source=source) from None
    if header != schema.names:
        raise ParseError(
            f"{source}: header {header} does not match schema {schema.names}",
            source=source,
            header=header,
            expected=schema.names,
        )
    rows = []
    for row_no, cells in enumerate(reader):
        if len(cells) != len(schema.attributes):
            raise ParseError(
                f"{source}: row {row_no} has {len(cells)} cells, expected "
                f"{len(schema.attributes)}",
                source=source,
                row=row_no,
            )
        values = []
        for (name, col_type), raw in zip(schema.attributes, cells):
            if raw == null_token:
                values.append(None)
            else:
                values.append(_parse_cell(raw, col_type, row_no, name))
        rows.append(Row(row_id=row_no, values=tuple(values)))
    return rows


def load_csv(path, schema: Schema, null_token: str = "") -> AnnotatedRelation:
    """Read an RFC-4180 CSV with a header row into an (unannotated) relation.

    Cells equal to null_token become NULL. Row ids follow file order from 0.
    """
    with open(path, newline="", encoding="utf-8") as f:
        rows = _read_rows(csv.reader(f), schema, null_token, str(path))
    return AnnotatedRelation(schema=schema, rows=rows)


def load_csv_text(text: str, schema: Schema, null_token: str = "") -> AnnotatedRelation:
    """Same as load_csv, from an in-memory CSV string (service uploads)."""
    rows = _read_rows(csv.reader(io.StringIO(text)), schema, null_token, "<inline>")
    return AnnotatedRelation(schema=schema, rows=rows)


def write_csv(rel: AnnotatedRelation, path, null_token: str = "") -> None:
    """Emit a CSV that load_csv round-trips bit-exactly (floats via repr)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(rel.schema.names)
        for row in rel.rows:
            cells = []
            for v in row.values:
                if v is None:
                    cells.append(null_token)
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            writer.writerow(cells)


def annotate_for_metric(db: Database, metric: "Metric") -> Database:
    """Return a new database annotated for one metric.

    The payload relation's rows carry the metric value (SUM: x, AVG: (1, x),
    MAX/MIN: x); every other relation carries the semiring one. COUNT(*)
    annotates every row everywhere with 1. Payload rows whose metric
    attribute is NULL are annotated zero and tallied in null_payload_count,
    never dropped. Tuple data is never changed; re-annotating is idempotent.
    """
    kind = metric.kind
    payload_rel = metric.payload_relation
    payload_attr = metric.payload_attr
    nulls = 0
    out = {}
    for name, rel in db.relations.items():
        unit = semiring.one(kind)
        if payload_rel == name and payload_attr is not None:
            col = rel.schema.index(payload_attr)  # MissingAttribute if absent
            if not rel.schema.attributes[col][1].numeric:
                raise NonNumericPayload(
                    f"metric {metric.name!r} payload {payload_rel}.{payload_attr} "
                    f"is not numeric",
                    relation=payload_rel,
                    attribute=payload_attr,
                )
            rows = []
            for row in rel.rows:
                v = row.values[col]
                if v is None:
                    nulls += 1
                    ann = semiring.zero(kind)
                elif kind is SemiringKind.SUM_REAL:
                    ann = Annotation.sum_real(v)
                elif kind is SemiringKind.AVG:
                    ann = Annotation.avg(1.0, v)
                elif kind is SemiringKind.MAX_TROPICAL:
                    ann = Annotation.max_val(v)
                elif kind is SemiringKind.MIN_TROPICAL:
                    ann = Annotation.min_val(v)
                else:
                    ann = unit
                rows.append(Row(row.row_id, row.values, ann))
            # a missing payload tuple contributes nothing to the aggregate
            null_row_ann = semiring.zero(kind)
        else:
            rows = [Row(r.row_id, r.values, unit) for r in rel.rows]
            null_row_ann = semiring.one(kind)
        out[name] = AnnotatedRelation(
            schema=rel.schema, rows=rows, kind=kind, null_row_ann=null_row_ann
        )
    return Database(relations=out, null_payload_count=nulls)
