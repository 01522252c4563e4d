"""Exception types raised across the package."""


class AnovaNetError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(AnovaNetError, ValueError):
    pass


class IndexOutOfRange(AnovaNetError, IndexError):
    pass


class InsufficientOrder(AnovaNetError, ValueError):
    pass


class UnsupportedOrder(AnovaNetError, ValueError):
    pass


class ShapeMismatch(AnovaNetError, ValueError):
    pass


class EmptyTape(AnovaNetError, RuntimeError):
    pass


class NonFiniteLoss(AnovaNetError, FloatingPointError):
    pass


class LineSearchFailed(AnovaNetError, RuntimeError):
    pass


class ActiveValueOutOfRange(AnovaNetError, ValueError):
    pass


class DegenerateVariance(AnovaNetError, ArithmeticError):
    pass


class DimensionTooLarge(AnovaNetError, ValueError):
    pass


class BoundaryTooClose(AnovaNetError, ValueError):
    pass


class ParseError(AnovaNetError, ValueError):
    """Malformed CSV content; carries the 1-based row and column."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class SchemaMismatch(AnovaNetError, ValueError):
    pass


class DegenerateColumn(AnovaNetError, ValueError):
    pass
