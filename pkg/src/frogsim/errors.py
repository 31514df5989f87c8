class ConfigError(ValueError):
    """Invalid user-supplied parameters. The message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SizeError(ConfigError):
    """Exact computation requested beyond its supported state-space size."""


class NumericalError(RuntimeError):
    pass


class CappedRunError(RuntimeError):
    """One or more trials hit the round cap; their outcome is unusable."""
