"""Exception hierarchy shared by the simulator modules and the CLI."""


class DickeBatteryError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DickeBatteryError, ValueError):
    """Invalid input: parameters, shapes, basis tags or config files."""


class DegenerateAngle(ValidationError):
    """The mixing angle sits on 0 or pi, where x is singular."""


class RangeError(ValidationError):
    """x**N cannot be represented even in log space."""


class NumericalError(DickeBatteryError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy result."""


class StepUnderflow(NumericalError):
    """The adaptive integrator needed a step below its floor."""


class PositivityViolation(NumericalError):
    """A sampled density matrix has a significantly negative eigenvalue."""


class BracketFailure(NumericalError):
    """A root finder found no sign change on its search interval."""


__all__ = [
    "DickeBatteryError",
    "ValidationError",
    "DegenerateAngle",
    "RangeError",
    "NumericalError",
    "StepUnderflow",
    "PositivityViolation",
    "BracketFailure",
]
