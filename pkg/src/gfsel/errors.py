"""Exception hierarchy shared across the package."""


class GfselError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GfselError, ValueError):
    """An argument violates a documented precondition."""


class NumericalFailureError(GfselError, RuntimeError):
    """An iterative routine produced a non-finite intermediate result."""


class DatasetParseError(GfselError, ValueError):
    """A dataset file could not be parsed; the message carries coordinates."""
