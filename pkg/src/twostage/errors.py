"""Exception types shared across the package."""


class InfeasibleDraw(ValueError):
    """Requested channel draw cannot be realised (e.g. more paths than grid points)."""


class ConfigurationError(ValueError):
    """Sounder or experiment parameters violate a structural constraint."""


class DegenerateEstimate(ValueError):
    """An estimated response matrix (or an LS system) is rank deficient."""


class BoundInvalid(ValueError):
    """Coherence hypothesis mu < 1/(2L-1) of the SRP bounds is violated."""


class InfeasibleAllocation(ValueError):
    """Resource allocation produced a non-positive budget or invalid bound."""


class MemoryBudgetExceeded(RuntimeError):
    """One-stage measurement matrix would exceed the configured element budget."""
