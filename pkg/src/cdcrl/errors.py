"""Exception types shared across the package."""


class CdcError(Exception):
    """Base class for all package errors."""


class ShapeError(CdcError, ValueError):
    pass


class NumericError(CdcError, ArithmeticError):
    """Non-finite value encountered.

    ``layer`` is the offending layer index when known, ``step`` the training
    step when raised from a training loop.
    """

    def __init__(self, message, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step


class DegenerateReferenceError(CdcError, ValueError):
    """Expert and random reference scores coincide (or are mis-ordered)."""


class FormatError(CdcError, ValueError):
    """Binary file has a bad magic, version, length or checksum."""


class MissingInitialStatesError(CdcError, ValueError):
    pass


class UndefinedCorrelationError(CdcError, ValueError):
    pass


class SolverError(CdcError, RuntimeError):
    """A root finder could not bracket or converge."""


class ConfigError(CdcError, ValueError):
    """Bad, missing or unknown configuration key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
