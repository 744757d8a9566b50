"""Exception types shared across the package."""


class VortexlabError(Exception):
    """Base class for package errors."""


class ConfigError(VortexlabError, ValueError):
    """Invalid parameters or configuration."""


class ConvexityError(ConfigError):
    """A potential failed its convexity or sign certification."""

    def __init__(self, message, t=None, value=None):
        super().__init__(message)
        self.t = t
        self.value = value


class DomainError(VortexlabError, ValueError):
    """A potential was evaluated outside its domain."""


class PreconditionError(VortexlabError, ValueError):
    """An operation was called outside the regime where it is defined."""


class ConvergenceError(VortexlabError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class PropertyCheckError(VortexlabError, AssertionError):
    """A verified property failed beyond tolerance."""
