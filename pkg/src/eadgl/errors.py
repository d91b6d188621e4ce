"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a game-space function."""


class GeometryError(ValueError):
    """Degenerate engagement geometry (coincident points, zero range)."""


class SingularTransformError(ArithmeticError):
    """The game-to-physical inverse transform is ill-conditioned."""


class ConfigError(ValueError):
    """Invalid scenario configuration."""


class RunError(RuntimeError):
    """A simulation run failed; carries the run context."""

    def __init__(self, message, *, seed=None, law=None, switch_time=None):
        super().__init__(message)
        self.seed = seed
        self.law = law
        self.switch_time = switch_time
