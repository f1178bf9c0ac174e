"""Exception types shared across the package."""


class PiesnError(Exception):
    """Base class for package errors."""


class ConfigError(PiesnError, ValueError):
    pass


class ConstructionError(PiesnError):
    pass


class DivergenceError(PiesnError, FloatingPointError):
    """A rollout or simulation left the finite / bounded region.

    ``step`` is the zero-based index of the first offending step.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class SolverError(PiesnError, ArithmeticError):
    pass


class TrainingInstability(PiesnError):
    pass


class LabelAccessError(PiesnError, PermissionError):
    """Training code tried to read labels it must not see."""
