"""Package-wide exception types."""


class ConfigurationError(ValueError):
    """A problem or catalog configuration is incomplete or inconsistent."""
