"""Exception types shared across the package."""


class RadnerError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RadnerError, ValueError):
    """An argument lies outside the domain of the operation (e.g. a time outside [0, T])."""


class SpecError(RadnerError, ValueError):
    """A market or trajectory description is invalid."""


class ConsistencyError(RadnerError, RuntimeError):
    """An internal invariant of the construction was violated; signals a bug upstream."""


class UnsupportedOperation(RadnerError):
    """The operation is not defined for the given model (e.g. slopes of a kinked trajectory)."""
