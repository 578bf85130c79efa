"""Exception types shared across the package."""


class PortselError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PortselError):
    """Malformed input data; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IncompleteMatrixError(ParseError):
    """A correlation entry required by the file format is missing."""


class ValidationError(PortselError):
    """Input data is well-formed but violates a domain invariant."""


class InfeasibleError(PortselError):
    """No state satisfying the constraints exists for the request."""


class InfeasibleRepairError(PortselError):
    """Renormalization cannot restore the sum-to-one property within bounds."""


class MoveRejectedError(PortselError):
    """The move cannot be applied to this state (caller should skip it)."""


class MetricError(PortselError):
    """A summary metric is undefined for the given inputs."""
