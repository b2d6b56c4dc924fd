"""Exception types shared across the package."""


class DagevoError(Exception):
    """Base class for all package errors."""


class ShapeError(DagevoError):
    """Matrix / tensor dimensions are inconsistent."""


class NumericsError(DagevoError):
    """A forward pass, gradient or loss produced non-finite values."""


class DomainError(DagevoError):
    """A value or requested neighborhood falls outside its declared domain."""


class StateError(DagevoError):
    """An operation was invoked on objects in an unusable state."""


class ParseError(DagevoError):
    """Malformed serialized input (graph text, model file or CSV cell)."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class MissingValueError(DagevoError):
    """A dataset cell is empty or NaN."""


class InsufficientDataError(DagevoError):
    """A split is too short for the requested lag/horizon windowing."""


class DegenerateSeriesError(DagevoError):
    """The scaled-error denominator vanished (constant series)."""


class ConfigError(DagevoError):
    """A run configuration value is missing, unknown or out of range."""


class EvaluationError(DagevoError):
    """An evaluator raised; carries the offending individual's id."""

    def __init__(self, individual_id, cause):
        self.individual_id = individual_id
        self.cause = cause
        super().__init__(f"evaluation of individual {individual_id} failed: {cause!r}")
