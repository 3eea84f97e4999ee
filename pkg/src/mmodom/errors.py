"""Exception types; the CLI maps each to an exit code."""


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""


class DataError(ValueError):
    """Scene or checkpoint contents do not match what is expected (exit code 3)."""


class NumericalError(ArithmeticError):
    """Non-finite values appeared during a forward pass or training (exit code 4)."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage
