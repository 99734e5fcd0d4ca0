"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ToolkitError, ValueError):
    """An argument is outside the physical or numerical domain of an operation."""


class DegenerateLayerError(DomainError):
    """A layer cannot be mapped, e.g. every weight is zero."""


class CutoffLookupError(DomainError):
    """A gate voltage is missing from a cutoff table."""


class TrainingDivergedError(ToolkitError):
    """Training produced a non-finite loss."""
