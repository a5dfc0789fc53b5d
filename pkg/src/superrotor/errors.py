"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`GuardError` and subclasses -> 3, :class:`OutputError` -> 4.
"""


class SuperrotorError(Exception):
    """Base class for all package errors."""


class ConfigError(SuperrotorError, ValueError):
    """Invalid configuration or molecule database entry."""


class GuardError(SuperrotorError):
    """A numerical or physical guard rejected the run."""

    code = "guard"


class TruncationError(GuardError):
    """Population reached the top shells of the truncated basis."""

    code = "truncation"


class ThermalTruncationError(GuardError):
    """Thermal tail beyond ``n_max`` is not negligible."""

    code = "thermal_truncation"

    def __init__(self, message, required_n_max):
        super().__init__(message)
        self.required_n_max = required_n_max


class StepSizeError(GuardError):
    """Requested integration step is too coarse for the field."""

    code = "step_size"


class ImpulsiveValidityError(GuardError):
    """Pulse too long to be treated as an instantaneous kick."""

    code = "impulsive_validity"


class OutputError(SuperrotorError, OSError):
    """Writing results failed."""
