"""Exception types shared across the toolkit."""


class SonotrackError(Exception):
    """Base class; ``kind`` is used as the machine-readable CLI error prefix."""

    kind = "error"


class DomainError(SonotrackError, ValueError):
    kind = "domain"


class ConfigError(SonotrackError, ValueError):
    kind = "config"


class FormatError(SonotrackError, ValueError):
    kind = "format"
