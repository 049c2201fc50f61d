"""Exception hierarchy shared by all lavlab modules."""


class LavlabError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(LavlabError, ValueError):
    """Non-finite or malformed numeric input."""


class ParameterError(LavlabError, ValueError):
    """A parameter lies outside its documented range."""


class DomainError(LavlabError, ValueError):
    """Geometric request that does not intersect the domain."""


class UnsupportedFamilyError(LavlabError, TypeError):
    """Operation not available for the given N-function family or shape."""


class NumericalError(LavlabError, ArithmeticError):
    """A numerical procedure failed (overflow, divergence, non-finite value)."""


class ResolutionWarning(UserWarning):
    """Grid is too coarse for the requested smoothing scale."""
