"""Exception hierarchy for the semiclassical lab."""

from typing import Any, Optional


class LabError(Exception):
    """Base class for every error raised by the lab."""

    exit_code = 3


class ConfigurationError(LabError):
    """Invalid or unreadable experiment configuration."""

    exit_code = 2


class NumericalError(LabError):
    """A computation could not produce a trustworthy result."""

    exit_code = 3


class ResolutionError(NumericalError):
    """A grid does not resolve the object placed on it."""

    def __init__(self, message: str, hint: Optional[str] = None):
        super().__init__(message if hint is None else f"{message} ({hint})")
        self.hint = hint


class SupportEscapeError(NumericalError):
    """Mass reached the frame of a periodic grid."""

    def __init__(self, message: str, escaped_mass: float):
        super().__init__(message)
        self.escaped_mass = escaped_mass


class IntegrationFailure(NumericalError):
    """The ODE integrator gave up; the partial trajectory is kept."""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class FlowBreakdown(NumericalError):
    """The radial variable of the full flow reached zero."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class AliasingError(NumericalError):
    """Angular spectrum has not decayed at the Nyquist mode."""


class EnclosureError(NumericalError):
    """Polar support does not fit inside the Cartesian box."""


class BoundaryMassAlarm(NumericalError):
    """Evolved state pushed mass into the absorbing frame."""

    def __init__(self, message: str, frame_mass: float):
        super().__init__(message)
        self.frame_mass = frame_mass
