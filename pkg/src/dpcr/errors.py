"""Exception and warning types shared across the package."""


class DpcrError(Exception):
    """Base class for package errors."""


class ParseError(DpcrError, ValueError):
    """Malformed input table. ``line`` is the 1-based line number, if known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(DpcrError, ValueError):
    """Input outside the domain where an operation is defined."""


class ConvergenceError(DpcrError, RuntimeError):
    """An iterative solver ran out of budget. ``last`` is its final iterate."""

    def __init__(self, message, last=None):
        self.last = last
        super().__init__(message)


class ArimaFitError(DpcrError, RuntimeError):
    """A candidate ARIMA order could not be fitted."""

    def __init__(self, order, reason):
        self.order = order
        super().__init__(f"ARIMA{tuple(order)}: {reason}")


class ImprovementClampWarning(UserWarning):
    """A forecast improvement fell outside (-2, 2) and was clamped."""
