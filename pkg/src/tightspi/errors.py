"""Exception types raised across the package."""


class TightSpiError(Exception):
    """Base class for all package errors."""


class InvalidInput(TightSpiError, ValueError):
    pass


class NonConvergence(TightSpiError, RuntimeError):
    pass


class InvalidDiscount(TightSpiError, ValueError):
    """A cycle of undiscounted states was found."""


class MalformedPath(TightSpiError, ValueError):
    pass


class DimensionMismatch(TightSpiError, ValueError):
    pass


class DomainError(TightSpiError, ValueError):
    pass


class Infeasible(TightSpiError, RuntimeError):
    pass


class UnknownEnv(TightSpiError, KeyError):
    pass


class InvalidParameters(TightSpiError, ValueError):
    pass


class InvalidEpsilon(TightSpiError, ValueError):
    pass


class EmptyInput(TightSpiError, ValueError):
    pass
