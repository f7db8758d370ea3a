"""Exception hierarchy shared by every module."""


class LeadLagError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LeadLagError, ValueError):
    """A record in an input stream could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(LeadLagError, ValueError):
    """Input parsed but violates a domain invariant (crossed book, volume going backwards)."""


class ConfigurationError(LeadLagError, ValueError):
    """A configuration value or combination of values is unusable."""


class EstimatorUndefined(LeadLagError, ArithmeticError):
    """An estimator has no defined value, e.g. a path with zero variance."""


class RankDeficientError(LeadLagError, ValueError):
    """Design matrix columns are linearly dependent."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(f"design matrix is rank deficient; collinear column(s): {', '.join(self.columns)}")


class SingularDenominatorError(LeadLagError, ZeroDivisionError):
    """A closed-form expression has a zero denominator."""
