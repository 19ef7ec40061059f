"""Exception hierarchy shared by every module."""


class ResilientNEError(Exception):
    """Base class for all library errors."""


class NonFiniteInput(ResilientNEError, ValueError):
    pass


class DimensionMismatch(ResilientNEError, ValueError):
    pass


class SingularGame(ResilientNEError):
    pass


class UnsupportedGame(ResilientNEError):
    pass


class NotStronglyMonotone(ResilientNEError):
    pass


class TooLarge(ResilientNEError):
    """An exhaustive enumeration would exceed the configured budget."""


class AssumptionViolation(ResilientNEError):
    pass


class NoTruthfulNeighbors(ResilientNEError):
    pass


class UnknownEdge(ResilientNEError, KeyError):
    pass


class RowSumViolation(ResilientNEError):
    pass


class ShapeMismatch(ResilientNEError, ValueError):
    pass


class NotConverged(ResilientNEError):
    pass


class DomainError(ResilientNEError, ValueError):
    pass


class ScenarioError(ResilientNEError):
    """Base for scenario file problems; ``field`` names the offending key path."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


class RoundError(ResilientNEError):
    """Wraps an error raised while executing a simulation round."""

    def __init__(self, round_index, cause):
        self.round_index = round_index
        self.cause = cause
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")
