class ConfigError(ValueError):
    """Invalid configuration or mismatched dimensions."""


class RejectedAction(ValueError):
    """A scheduling action violates the environment's assignment rules."""

    def __init__(self, pair, reason):
        self.pair = pair
        self.reason = reason
        super().__init__(f"rejected action {pair}: {reason}")


class LoadError(ValueError):
    """A file could not be parsed or failed validation."""


class CheckpointError(LoadError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message if t is None else f"{message} (t={t:.6g})")


class CalibrationError(RuntimeError):
    pass


class DegenerateResult(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    pass
