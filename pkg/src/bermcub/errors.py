"""Exception types shared across the package."""


class CapabilityError(ValueError):
    """Requested construction is not available for the given arguments."""


class ResourceError(RuntimeError):
    """A configured node, path or term budget would be exceeded."""


class IterationError(RuntimeError):
    """Fixed-point iteration failed to converge; carries the trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class PreconditionError(ValueError):
    """Input violates a mathematical precondition of the method."""


class DegenerateMarketError(ValueError):
    """Market or trimmed market does not support the requested computation."""
