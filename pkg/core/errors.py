"""
Error types shared by every linksim service.

Management commands map ConfigurationError to exit status 2 and any other
LinkSimError to exit status 1.
"""


class LinkSimError(Exception):
    """Base class for all linksim failures."""


class InvalidArgument(LinkSimError, ValueError):
    """Raised when an operation receives arguments outside its domain."""


class NumericFailure(LinkSimError, ArithmeticError):
    """Raised when a matrix operation cannot be carried out reliably."""

    def __init__(self, message, condition_number=None):
        if condition_number is not None:
            message = f"{message} (condition number {condition_number:.3e})"
        super().__init__(message)
        self.condition_number = condition_number


class UnsupportedSize(LinkSimError):
    """Raised when an exhaustive search would exceed the configured cap."""


class TargetUnreachable(LinkSimError):
    """Raised when no BMDR-CER row meets the requested error target."""

    def __init__(self, message, query=None):
        super().__init__(message)
        self.query = query


class ConfigurationError(LinkSimError):
    """Raised for missing or invalid scenario files, tables and settings."""
