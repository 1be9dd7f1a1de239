"""Exception types shared across the package."""


class HsfmError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(HsfmError):
    """Invalid inputs, shapes, configuration, or file contents."""


class FormatError(ValidationError):
    """A binary file does not conform to the expected on-disk layout."""


class ConfigError(ValidationError):
    """A run configuration failed schema validation."""


class DivergenceError(HsfmError):
    """Training produced a non-finite loss or parameter value."""
