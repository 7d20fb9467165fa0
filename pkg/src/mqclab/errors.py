"""Exception hierarchy.

Two families matter to the command line: :class:`ValidationError` (bad input,
exit code 1) and :class:`NumericalError` (the computation itself failed,
exit code 2).
"""


class MqcError(Exception):
    """Base class for every error raised by mqclab."""


class ValidationError(MqcError, ValueError):
    """Invalid input or configuration."""

    def __init__(self, message, field_path=None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class NumericalError(MqcError, ArithmeticError):
    """A numerical procedure failed or produced an inconsistent result."""


class ConfigIoError(ValidationError):
    """A configuration or input file could not be read."""


class ConfigSyntaxError(ValidationError):
    """A configuration file is not well-formed JSON."""


class CapExceeded(ValidationError):
    pass


class UnknownKind(ValidationError):
    pass


class BadWeight(ValidationError):
    pass


class BadConfig(ValidationError):
    pass


class BadParams(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class Aliasing(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class EigFailure(NumericalError):
    pass


class NegativeAmplitude(NumericalError):
    pass


class NoCrossing(NumericalError):
    """The spectrum never drops below A(0)/e on the populated grid."""

    def __init__(self, message, q_max=None):
        self.q_max = q_max
        super().__init__(message)


class Degenerate(NumericalError):
    pass


class FitFailure(NumericalError):
    pass
