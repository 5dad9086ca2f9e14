"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model, payment, or config document violates a structural constraint."""


class DivergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the last observed sup-norm residual in ``residual``.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ZeroEvidenceError(RuntimeError):
    """An observation sequence has probability zero under every follower type."""
