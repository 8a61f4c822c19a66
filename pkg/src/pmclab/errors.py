"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration or argument outside a documented guard."""


class SmallnessWarning(UserWarning):
    """Data exceed the configured smallness budget; the solve is still attempted."""


class PreconditionError(ValueError):
    """Inputs violate a documented precondition of an operation."""


class InvalidGaugeError(ValueError):
    """Gauge map with non-positive Jacobian or boundary mismatch."""


class NewtonError(RuntimeError):
    """Newton iteration did not converge; ``report`` holds the iteration history."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class SpectralError(RuntimeError):
    """Zero is (numerically) a Dirichlet eigenvalue of the operator."""


class ContractionError(RuntimeError):
    """Neumann series operator is not contracting at the requested ``h``."""

    def __init__(self, message, ratio):
        super().__init__(message)
        self.ratio = ratio
