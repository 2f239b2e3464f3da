"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Malformed input: bad shapes, out-of-range parameters, unparsable config."""


class InfeasibleMarginalsError(ValueError):
    """Endpoint densities do not carry the same total mass."""


class NumericalError(RuntimeError):
    """An iterative method failed to converge or diverged."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedDimensionError(ValueError):
    """Operation only defined for a particular spatial dimension."""


class DomainError(ValueError):
    """Argument outside the domain of a pointwise function."""


class DegenerateSlopeError(ValueError):
    """A potential has non-negative time slope where a strict decrease is needed."""
