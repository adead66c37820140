"""Exception types raised by switchseg."""


class SwitchsegError(Exception):
    """Base class for all package errors."""


class ModelValidationError(SwitchsegError, ValueError):
    """A model failed validation; ``report`` carries the individual failures."""

    def __init__(self, report):
        self.report = report
        super().__init__("invalid model: " + "; ".join(report.failures))


class ImpossibleDataError(SwitchsegError):
    """The observations have zero probability under the model."""


class NumericalError(SwitchsegError):
    """A linear-algebra step failed (e.g. innovation covariance not PD)."""


class RegimeStarvationError(SwitchsegError):
    """EM left a regime with (numerically) zero total responsibility."""


class MixtureCapError(SwitchsegError):
    """An exact Gaussian-mixture filter exceeded its component cap."""


class EnumerationGuardError(SwitchsegError):
    """A brute-force oracle was asked to enumerate too many configurations."""
