"""Exception hierarchy shared across the package."""


class TrapCoherenceError(Exception):
    """Base class for all package errors."""


class ValidationError(TrapCoherenceError, ValueError):
    """Input failed a schema, range or consistency check."""


class ParseError(ValidationError):
    """Text input could not be parsed.

    Parameters
    ----------
    message : str
        Human readable description.
    line, column : int, optional
        1-based location of the offending token.
    expected : iterable of str, optional
        Tokens that would have been accepted at that location.
    """

    def __init__(self, message, line=None, column=None, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(sorted(expected))
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        tail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{loc}{message}{tail}")


class NumericalError(TrapCoherenceError, RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""


class NoSolutionError(NumericalError):
    """Calibration targets cannot be met by the model family."""


class EigenSolverError(NumericalError):
    """Bound-state computation failed (too few bound states, clipped tails)."""


class IntegrationError(NumericalError):
    """Adaptive integration aborted; ``reached_time`` is the last accepted time."""

    def __init__(self, message, reached_time):
        self.reached_time = float(reached_time)
        super().__init__(f"{message} (reached t = {self.reached_time:.6e} s)")


class NotFittedError(TrapCoherenceError, AttributeError):
    """Estimator used before ``fit``."""
