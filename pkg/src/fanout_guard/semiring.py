"""Commutative semiring algebra for aggregate annotations.

Each supported aggregate corresponds to one semiring (carrier, add, mul,
zero, one). Group-by folds annotations with add; joins combine them with
mul; weighing scales them by a non-negative rational. Counts live in exact
rationals so that fractional weights stay closed under multiplication;
sums and averages use 64-bit floats with a 1e-9 comparison tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

from .errors import AnnotationProductError, KindMismatch, UnsupportedScale

#: Anything accepted where a weight is expected. Strings are parsed as exact
#: decimals ("0.4" -> 2/5), floats convert exactly from their binary value.
WeightLike = Union[int, float, str, Fraction]

NEG_INF = float("-inf")
POS_INF = float("inf")


class SemiringKind(Enum):
    COUNT = "count"
    SUM_REAL = "sum_real"
    AVG = "avg"
    MAX_TROPICAL = "max_tropical"
    MIN_TROPICAL = "min_tropical"

    @property
    def scalable(self) -> bool:
        """Tropical kinds need no weighing and reject scaling."""
        return self in (SemiringKind.COUNT, SemiringKind.SUM_REAL, SemiringKind.AVG)


@dataclass(frozen=True)
class Annotation:
    """A value in one semiring's carrier.

    Carriers by kind:
      COUNT        -> Fraction >= 0
      SUM_REAL     -> float
      AVG          -> (count: float, sum: float) pair
      MAX_TROPICAL -> float or -inf (add = max, mul = +)
      MIN_TROPICAL -> float or +inf (add = min, mul = +)
    """

    kind: SemiringKind
    value: object

    @staticmethod
    def count(v: Union[int, Fraction]) -> "Annotation":
        f = Fraction(v)
        if f < 0:
            raise ValueError(f"count annotation must be non-negative, got {f}")
        return Annotation(SemiringKind.COUNT, f)

    @staticmethod
    def sum_real(v: float) -> "Annotation":
        return Annotation(SemiringKind.SUM_REAL, float(v))

    @staticmethod
    def avg(count: float, total: float) -> "Annotation":
        return Annotation(SemiringKind.AVG, (float(count), float(total)))

    @staticmethod
    def max_val(v: float) -> "Annotation":
        return Annotation(SemiringKind.MAX_TROPICAL, float(v))

    @staticmethod
    def min_val(v: float) -> "Annotation":
        return Annotation(SemiringKind.MIN_TROPICAL, float(v))


def zero(kind: SemiringKind) -> Annotation:
    if kind is SemiringKind.COUNT:
        return Annotation(kind, Fraction(0))
    if kind is SemiringKind.SUM_REAL:
        return Annotation(kind, 0.0)
    if kind is SemiringKind.AVG:
        return Annotation(kind, (0.0, 0.0))
    if kind is SemiringKind.MAX_TROPICAL:
        return Annotation(kind, NEG_INF)
    return Annotation(kind, POS_INF)


def one(kind: SemiringKind) -> Annotation:
    if kind is SemiringKind.COUNT:
        return Annotation(kind, Fraction(1))
    if kind is SemiringKind.SUM_REAL:
        return Annotation(kind, 1.0)
    if kind is SemiringKind.AVG:
        return Annotation(kind, (1.0, 0.0))
    # tropical one is the additive identity of +
    return Annotation(kind, 0.0)


def _check_kinds(a: Annotation, b: Annotation, op: str) -> None:
    if a.kind is not b.kind:
        raise KindMismatch(
            f"cannot {op} annotations of kinds {a.kind.value} and {b.kind.value}",
            left=a.kind.value,
            right=b.kind.value,
        )


def sr_add(a: Annotation, b: Annotation) -> Annotation:
    """Semiring addition: the group-by fold."""
    _check_kinds(a, b, "add")
    k = a.kind
    if k is SemiringKind.COUNT or k is SemiringKind.SUM_REAL:
        return Annotation(k, a.value + b.value)
    if k is SemiringKind.AVG:
        (c1, s1), (c2, s2) = a.value, b.value
        return Annotation(k, (c1 + c2, s1 + s2))
    if k is SemiringKind.MAX_TROPICAL:
        return Annotation(k, max(a.value, b.value))
    return Annotation(k, min(a.value, b.value))


def sr_mul(a: Annotation, b: Annotation) -> Annotation:
    """Semiring multiplication: the join combiner.

    For AVG, the pair product is (c1*c2, c1*s2 + c2*s1). Only one factor may
    carry a sum payload; a single query annotates exactly one relation with
    (1, value) pairs and every other relation with count-lifted (w, 0) pairs,
    so a two-payload product signals a mis-built query and is rejected.
    """
    _check_kinds(a, b, "multiply")
    k = a.kind
    if k is SemiringKind.COUNT or k is SemiringKind.SUM_REAL:
        return Annotation(k, a.value * b.value)
    if k is SemiringKind.AVG:
        (c1, s1), (c2, s2) = a.value, b.value
        if s1 != 0.0 and s2 != 0.0:
            raise AnnotationProductError(
                "product of two payload-bearing avg annotations",
                left=a.value,
                right=b.value,
            )
        return Annotation(k, (c1 * c2, c1 * s2 + c2 * s1))
    # tropical multiplication is +; -inf/+inf absorb as required
    return Annotation(k, a.value + b.value)


def as_fraction(w: WeightLike) -> Fraction:
    """Exact weight coercion. Decimal strings are exact ("0.4" -> 2/5);
    floats convert from their exact binary value."""
    f = Fraction(w)
    return f


def sr_scale(a: Annotation, w: WeightLike) -> Annotation:
    """Multiply an annotation by a scalar weight.

    Tropical kinds are rejected: min/max already satisfy the per-key
    neutrality condition (max(0,...,0) = 0) and never need weighing.
    """
    k = a.kind
    if not k.scalable:
        raise UnsupportedScale(
            f"{k.value} annotations cannot be weighed", kind=k.value
        )
    f = as_fraction(w)
    if f < 0:
        raise ValueError(f"weight must be non-negative, got {f}")
    if k is SemiringKind.COUNT:
        return Annotation(k, a.value * f)
    wf = float(f)
    if k is SemiringKind.SUM_REAL:
        return Annotation(k, a.value * wf)
    c, s = a.value
    return Annotation(k, (c * wf, s * wf))


def sr_finalize(a: Annotation) -> Optional[float]:
    """Extract the user-facing scalar; None for degenerate inputs
    (empty average, max/min of nothing)."""
    k = a.kind
    if k is SemiringKind.COUNT:
        return float(a.value)
    if k is SemiringKind.SUM_REAL:
        return a.value
    if k is SemiringKind.AVG:
        c, s = a.value
        if c == 0.0:
            return None
        return s / c
    if k is SemiringKind.MAX_TROPICAL:
        return None if a.value == NEG_INF else a.value
    return None if a.value == POS_INF else a.value


def _close(x: float, y: float, rel_tol: float) -> bool:
    if x == y:
        return True
    if math.isinf(x) or math.isinf(y):
        return x == y
    return abs(x - y) <= rel_tol * max(1.0, abs(x), abs(y))


def annotations_close(a: Annotation, b: Annotation, rel_tol: float = 1e-9) -> bool:
    """Equality up to kind-appropriate tolerance: exact for counts, relative
    1e-9 for float carriers; AVG compares the (count, sum) pair componentwise,
    never the finalized ratio."""
    if a.kind is not b.kind:
        return False
    k = a.kind
    if k is SemiringKind.COUNT:
        return a.value == b.value
    if k is SemiringKind.AVG:
        (c1, s1), (c2, s2) = a.value, b.value
        return _close(c1, c2, rel_tol) and _close(s1, s2, rel_tol)
    return _close(a.value, b.value, rel_tol)
