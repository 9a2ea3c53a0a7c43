"""Exception types shared across the package."""


class GripError(Exception):
    """Base class for all errors raised by gripplus."""


class DimensionError(GripError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(GripError, ValueError):
    """A numeric argument is outside its valid range."""


class UsageError(GripError, RuntimeError):
    """An API was called in an invalid state (e.g. backward on a non-scalar)."""


class DataError(GripError, ValueError):
    """Input data is malformed or inconsistent."""


class CapacityError(DataError):
    """A scene holds more agents than the model was built for."""


class DivergenceError(GripError, RuntimeError):
    """Training produced a non-finite loss."""
