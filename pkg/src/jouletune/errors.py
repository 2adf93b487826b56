"""Exception types shared across the package."""


class JouleTuneError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(JouleTuneError):
    """A space, manifest, device file, or expression is inconsistent."""


class UnknownNameError(ConfigurationError):
    """An expression references a name that is not defined.

    The offending name is kept on the ``name`` attribute so callers can
    report exactly which identifier was missing.
    """

    def __init__(self, name: str, context: str = ""):
        self.name = name
        message = f"unknown name {name!r}"
        if context:
            message += f" in {context}"
        super().__init__(message)


class ExpressionError(ConfigurationError):
    """An expression could not be parsed or uses unsupported syntax."""


class InvalidConfigError(JouleTuneError):
    """A kernel configuration is not a valid member of the search space."""


class DomainError(JouleTuneError):
    """A requested value lies outside the supported domain of the device."""


class CapabilityError(JouleTuneError):
    """The device does not support the requested operation."""


class SensorNotReadyError(JouleTuneError):
    """An averaged power reading was requested before the first refresh
    window completed."""


class MeasurementError(JouleTuneError):
    """A measurement window is empty, inverted, or produced a non-finite
    value."""


class FitError(JouleTuneError):
    """Model fitting failed to converge.

    Carries the last parameter iterate and residual vector for diagnosis.
    """

    def __init__(self, message, theta=None, residuals=None):
        super().__init__(message)
        self.theta = theta
        self.residuals = residuals


class UnderDeterminedError(FitError):
    """Fewer samples than free model parameters."""


class TuningError(JouleTuneError):
    """A tuning run finished without a single successful evaluation."""


class AnalysisError(JouleTuneError):
    """Landscape analysis was asked to run on incomplete inputs."""
