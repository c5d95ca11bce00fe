"""Error taxonomy shared across the package.

Exit-code mapping used by the CLI: configuration/structural/usage problems
exit 2, numeric failures exit 3, I/O failures exit 4.
"""


class CtlabError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ConfigError(CtlabError):
    """Invalid configuration value or unusable config file."""

    exit_code = 2


class StructuralError(CtlabError):
    """Shape/layout mismatch: wrong dimensions, stale tape, bad checkpoint."""

    exit_code = 2


class UsageError(CtlabError):
    """Argument outside its documented domain (e.g. sigma out of range)."""

    exit_code = 2


class NumericError(CtlabError):
    """Non-finite values or numerical divergence."""

    exit_code = 3

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = context or {}
