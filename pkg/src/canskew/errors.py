"""Exception hierarchy for the canskew toolkit."""


class CanSkewError(Exception):
    """Base class for all canskew errors."""


class ScenarioError(CanSkewError):
    """A scenario (or one of its parts) violates the schema or an invariant."""


class InvalidInputError(CanSkewError):
    """An operation was called with inputs that break its contract."""


class InsufficientDataError(CanSkewError):
    """Not enough samples to compute the requested quantity."""


class TraceFormatError(CanSkewError):
    """A trace or database document could not be parsed.

    ``line`` is the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
