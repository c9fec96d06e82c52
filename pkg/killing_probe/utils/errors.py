"""
Error types raised by the killing-probe pipeline
"""

from typing import Any, Dict, Optional

from killing_probe.config import EXIT_CONFIG, EXIT_NUMERICAL


class KillingProbeError(Exception):
    """Base class; `kind` is the stable name reported in structured errors."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "message": self.message, "details": self.details}

    def __reduce__(self):
        # keep details when errors cross process boundaries
        return (type(self), (self.message, self.details))


class OutOfDomain(KillingProbeError):
    pass


class SingularMetric(KillingProbeError):
    pass


class DegenerateResult(KillingProbeError):
    pass


class LeftDomain(KillingProbeError):
    pass


class StepFailure(KillingProbeError):
    pass


class NoConvergence(KillingProbeError):
    pass


class LightLike(KillingProbeError):
    pass


class IllConditioned(KillingProbeError):
    pass


class ConfigurationExhausted(KillingProbeError):
    pass


class ConfigError(KillingProbeError):
    exit_code = EXIT_CONFIG


class UnknownMetric(ConfigError):
    pass


class UsageError(ConfigError):
    pass


# Failures after which sample_configuration draws a fresh point set
RESAMPLE_ERRORS = (NoConvergence, LightLike, LeftDomain, StepFailure, IllConditioned)


def to_error_object(exc: BaseException) -> Dict[str, Any]:
    """Structured error object for reports and the CLI."""
    if isinstance(exc, KillingProbeError):
        return exc.to_dict()
    return {"kind": type(exc).__name__, "message": str(exc), "details": {}}
