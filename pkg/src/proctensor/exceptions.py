"""Error types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition (shape, domain, state)."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced an invalid result."""


class CapabilityError(RuntimeError):
    """The request exceeds a documented dense-size or feature cap."""
