"""Exception types raised by the solver."""


class EosDomainError(ValueError):
    """A state lies outside the domain of the Peng-Robinson free energy."""


class ConfigError(ValueError):
    """A scenario or mixture configuration is invalid."""


class SingularSystemError(RuntimeError):
    """A sparse solve failed to reach the requested residual."""
