"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration file or CLI usage (maps to exit code 2)."""


class ModelError(ValueError):
    """A domain object violates one of its invariants."""


class StationaryDistributionError(RuntimeError):
    """The chain has no unique stationary distribution, or iteration failed.

    Carries the last power-iteration residual when iteration ran but did not
    converge; ``None`` when the chain was rejected structurally.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
