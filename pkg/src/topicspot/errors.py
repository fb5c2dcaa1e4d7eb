"""Exception types shared across the package."""


class TopicSpotError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TopicSpotError, ValueError):
    """Tensor operands have incompatible shapes."""


class ValidationError(TopicSpotError, ValueError):
    """Input data violates a documented invariant."""


class ParseError(TopicSpotError, ValueError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(TopicSpotError, ArithmeticError):
    """A computation produced non-finite values."""
