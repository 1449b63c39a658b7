"""Exception types shared across the package."""


class ContractError(ValueError):
    """An input violates a documented precondition or invariant."""


class SolverError(RuntimeError):
    """The hybrid solver could not continue (chattering, domain exit, bound violation)."""


class ConfigError(ValueError):
    """A scenario configuration is invalid."""
