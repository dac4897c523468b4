"""Exception types raised across the package."""


class DigiqError(Exception):
    """Base class for all package errors."""


class DomainError(DigiqError, ValueError):
    """An argument lies outside the domain of a formula."""


class RegisterOverflow(DigiqError, OverflowError):
    """A fixed-point register value left the representable range."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DimensionMismatch(DigiqError, ValueError):
    pass


class IndexOutOfRange(DigiqError, IndexError):
    pass


class NotHermitian(DigiqError, ValueError):
    pass


class ZeroMatrix(DigiqError, ValueError):
    pass


class DegenerateSpectrumBounds(DigiqError, ValueError):
    """Lower and upper spectral bounds coincide (operator is a scalar multiple of I)."""

    def __init__(self, message, value):
        super().__init__(message)
        self.value = value


class NotPositiveDefinite(DigiqError, ValueError):
    pass


class UnnormalizedState(DigiqError, ValueError):
    pass


class NonHermitianBlock(DigiqError, ValueError):
    pass


class SingularOperator(DigiqError, ArithmeticError):
    pass


class MaxIterationsExceeded(DigiqError, RuntimeError):
    """Iteration budget ran out; the residual history is attached."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class DivisionByNegligible(DigiqError, ZeroDivisionError):
    pass


class DimensionTooLarge(DigiqError, ValueError):
    pass


class ConfigError(DigiqError, ValueError):
    """Malformed run configuration; carries the offending field or line."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.message = message
        self.field = field
        self.line = line
