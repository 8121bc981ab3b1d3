"""Exception types shared across the package, with process exit codes for the CLI."""


class UmbrError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigurationError(UmbrError, ValueError):
    """Invalid or incompatible configuration (bad flags, mismatched vocabularies)."""

    exit_code = 2


class DataError(UmbrError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class GuardError(UmbrError, RuntimeError):
    """A safety guard refused to run (for example, an enumeration space too large)."""

    exit_code = 4
