"""Exception types shared across the package."""


class QPNetError(Exception):
    """Base class for all package errors."""


class DomainError(QPNetError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(QPNetError, ValueError):
    """Inconsistent or invalid configuration."""


class ShapeError(QPNetError, ValueError):
    """Sequences that must align have mismatched lengths or widths."""


class FormatError(QPNetError, ValueError):
    """A binary file does not match its declared layout."""


class TrainingError(QPNetError, RuntimeError):
    """Training diverged or cannot proceed."""
