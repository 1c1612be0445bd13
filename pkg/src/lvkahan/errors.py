"""Exception hierarchy.

Indices carried by exceptions are 1-based, matching the mathematical
notation used throughout the documentation.
"""


class LVError(Exception):
    """Base class for every error raised by this package."""


class ZeroCoefficients(LVError, ValueError):
    pass


class EmptyDimension(LVError, ValueError):
    pass


class DimensionMismatch(LVError, ValueError):
    pass


class ZeroScale(LVError, ValueError):
    pass


class IndexOutOfRange(LVError, IndexError):
    pass


class EvenDimension(LVError, ValueError):
    pass


class NotApplicable(LVError, ValueError):
    pass


class EmptySet(LVError, ValueError):
    pass


class IllegalOverride(LVError, ValueError):
    pass


class OutOfRange(LVError, ValueError):
    pass


class BadRange(LVError, ValueError):
    pass


class ConfigError(LVError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainEvent(LVError, ArithmeticError):
    """A pole or finite-time blowup was hit while evaluating something."""


class PoleError(DomainEvent):
    """A denominator vanished; ``index`` names the coordinate or v-index."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"pole: denominator vanishes at index {index}")


class MapPoleError(PoleError):
    """A denominator of a rational map vanished (index into v_0..v_n)."""


class BlowupError(DomainEvent):
    def __init__(self, index, critical_time=None, message=None):
        self.index = index
        self.critical_time = critical_time
        if message is None:
            message = f"blowup: denominator for v_{index} vanishes"
            if critical_time is not None:
                message += f" at t* = {critical_time!r}"
        super().__init__(message)


class SingularSystem(DomainEvent):
    def __init__(self, condition, message=None):
        self.condition = condition
        super().__init__(message or f"singular Kahan system (condition estimate {condition:.3e})")


class NumericalJacobianFailure(DomainEvent):
    pass
