"""fanout_guard: consistent aggregation over declared join graphs.

Metrics are evaluated over semiring-annotated relations so that group-by
adds and join multiplies annotations; join fanout is neutralized by
user-directed per-join-key weighing, and every run can be checked against
the base query's total.
"""

from .consistency import ConsistencyReport, check, diagnose
from .engine import GroupedResult, aggregate, evaluate, join, partial_view, pushdown_aggregate
from .join_graph import Cardinality, JoinEdge, JoinGraph, steiner_subtree, weighing_targets
from .loader import Bundle, bundle_from_payload, load_bundle
from .relation import (
    AnnotatedRelation,
    ColType,
    Database,
    Row,
    Schema,
    annotate_for_metric,
    load_csv,
    write_csv,
)
from .semantic_model import (
    Agg,
    Atom,
    BaseQuery,
    ExploratoryQuery,
    Metric,
    Predicate,
    QueryPlan,
    resolve,
)
from .semiring import Annotation, SemiringKind, sr_add, sr_finalize, sr_mul, sr_scale
from .weighing import (
    Custom,
    Equal,
    OrderBased,
    PositionBased,
    Proportional,
    WeightTable,
    build,
    identity_table,
)

__version__ = "0.1.0"

__all__ = [
    "Agg",
    "AnnotatedRelation",
    "Annotation",
    "Atom",
    "BaseQuery",
    "Bundle",
    "Cardinality",
    "ColType",
    "ConsistencyReport",
    "Custom",
    "Database",
    "Equal",
    "ExploratoryQuery",
    "GroupedResult",
    "JoinEdge",
    "JoinGraph",
    "Metric",
    "OrderBased",
    "PositionBased",
    "Predicate",
    "Proportional",
    "QueryPlan",
    "Row",
    "Schema",
    "SemiringKind",
    "WeightTable",
    "aggregate",
    "annotate_for_metric",
    "build",
    "bundle_from_payload",
    "check",
    "diagnose",
    "evaluate",
    "identity_table",
    "join",
    "load_bundle",
    "load_csv",
    "partial_view",
    "pushdown_aggregate",
    "resolve",
    "sr_add",
    "sr_finalize",
    "sr_mul",
    "sr_scale",
    "steiner_subtree",
    "weighing_targets",
    "write_csv",
]
