"""Exception types shared across the package."""


class BuildmonError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(BuildmonError, ValueError):
    """An argument violates an operation's precondition."""


class ValidationError(BuildmonError, ValueError):
    """Geometry or annotation data violates a type invariant."""


class ParseError(BuildmonError, ValueError):
    """A file does not conform to its schema."""


class MissingMetadataError(BuildmonError):
    """Required metadata (sidecar file, sun angles, NIR channel) is absent."""


class ConfigError(BuildmonError, ValueError):
    """Pipeline configuration is malformed or has unknown keys."""
