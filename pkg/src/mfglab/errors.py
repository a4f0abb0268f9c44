"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Field shape does not match the grid it claims to live on."""


class MassConservationError(ValueError):
    """A density slice (or path) violates unit mass / nonnegativity."""


class LinearSolveError(RuntimeError):
    """A tridiagonal/periodic linear solve produced non-finite values."""


class TimeStepDivergenceError(RuntimeError):
    """Non-finite values appeared during time stepping.

    Carries a suggested time step for retrying with a finer grid.
    """

    def __init__(self, message: str, suggested_dt: float | None = None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class ConfigError(ValueError):
    """Invalid experiment configuration; message includes the path to the field."""
