"""Exception hierarchy. Every error carries enough structure to be rendered
as JSON ({code, message, details}) by the service and the CLI."""

from __future__ import annotations


class FanoutGuardError(Exception):
    """Base class; `code` is the stable machine-readable identifier."""

    code = "Error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


# semiring ------------------------------------------------------------------

class KindMismatch(FanoutGuardError):
    code = "KindMismatch"


class UnsupportedScale(FanoutGuardError):
    code = "UnsupportedScale"


class AnnotationProductError(FanoutGuardError):
    """Product of two payload-bearing average annotations; at most one factor
    may carry a sum component."""

    code = "AnnotationProductError"


# relation ------------------------------------------------------------------

class ParseError(FanoutGuardError):
    code = "ParseError"


class CellTypeError(FanoutGuardError):
    code = "CellTypeError"


class MissingAttribute(FanoutGuardError):
    code = "MissingAttribute"


class NonNumericPayload(FanoutGuardError):
    code = "NonNumericPayload"


# join graph ----------------------------------------------------------------

class CycleDetected(FanoutGuardError):
    code = "CycleDetected"


class Disconnected(FanoutGuardError):
    code = "Disconnected"


class BadJoinAttr(FanoutGuardError):
    code = "BadJoinAttr"


class CardinalityMismatch(FanoutGuardError):
    code = "CardinalityMismatch"


class UnknownRelation(FanoutGuardError):
    code = "UnknownRelation"


# semantic model ------------------------------------------------------------

class UnknownAttribute(FanoutGuardError):
    code = "UnknownAttribute"


class UnknownMetric(FanoutGuardError):
    code = "UnknownMetric"


# engine --------------------------------------------------------------------

class MissingWeights(FanoutGuardError):
    code = "MissingWeights"


# weighing ------------------------------------------------------------------

class NonPositiveProportionalValue(FanoutGuardError):
    code = "NonPositiveProportionalValue"


class MissingOrderAttr(FanoutGuardError):
    code = "MissingOrderAttr"


class MissingRowId(FanoutGuardError):
    code = "MissingRowId"


class ValidationFailed(FanoutGuardError):
    code = "ValidationFailed"


# service -------------------------------------------------------------------

class RangeError(FanoutGuardError):
    code = "RangeError"


class UnknownSession(FanoutGuardError):
    code = "UnknownSession"
