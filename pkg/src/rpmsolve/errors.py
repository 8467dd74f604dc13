"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class InfeasibleSystemError(ValueError):
    """The linear system has no exact solution.

    Attributes
    ----------
    residual_norm : float
        Norm of the component of ``b`` outside the range of ``A``.
    """

    def __init__(self, message, residual_norm):
        super().__init__(message)
        self.residual_norm = residual_norm


class MatrixMarketError(ValueError):
    """Malformed or unsupported Matrix Market input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateDistributionError(ValueError):
    """A sampling distribution has no mass (e.g. all rows are zero)."""


class DegenerateRowError(ValueError):
    """A selector needed to divide by the norm of an all-zero row."""


class PreconditionError(ValueError):
    """A documented precondition of an operation was violated."""


class CapacityError(ValueError):
    """Exhaustive enumeration was refused because the input is too large."""


class IncompleteLogError(ValueError):
    """A stopping-time log lacks a quantity needed by a check."""


class ProtocolViolationError(RuntimeError):
    """A simulated node touched data it does not own."""
