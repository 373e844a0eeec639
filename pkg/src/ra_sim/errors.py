"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration; mapped to CLI exit code 2."""


class NumericalError(RuntimeError):
    """Non-finite state encountered inside an iterative solver; exit code 3."""
