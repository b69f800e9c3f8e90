"""Exception types shared across the package."""


class FlexnoiseError(Exception):
    """Base class for all package-specific errors."""


class NumericalError(FlexnoiseError, RuntimeError):
    """A numerical routine failed to reach its accuracy or stability target."""


class ConfigurationError(FlexnoiseError, ValueError):
    """An input object is structurally inconsistent (gaps, bad shapes, ...)."""


class DegenerateDataError(FlexnoiseError, ValueError):
    """The data carry no usable signal for the requested operation."""


class OptimizationError(FlexnoiseError, RuntimeError):
    """All optimization attempts failed; carries per-attempt diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class NotFittedError(FlexnoiseError, ValueError, AttributeError):
    """An estimator method requiring a fit was called before ``fit``."""
