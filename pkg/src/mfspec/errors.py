"""Exception types shared across the package."""


class BudgetExceededError(RuntimeError):
    """An exhaustive enumeration would exceed the configured evaluation budget.

    Raised instead of silently truncating or approximating; callers that can
    live with partial information must lower the depth or raise the budget.
    """


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
