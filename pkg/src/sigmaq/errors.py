"""Exception types raised by the engine."""


class ConfigurationError(ValueError):
    """Invalid parameters, grids, or run configuration."""


class UnsupportedError(TypeError):
    """The operation does not apply to this kind of process."""


class BudgetExhausted(RuntimeError):
    """A path had to be extended beyond the configured extension budget."""
