"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class FedContribError(Exception):
    exit_code = 1


class UsageError(FedContribError):
    exit_code = 1


class DataError(FedContribError, ValueError):
    """Bad input data: unreadable file, malformed rows, degenerate labels."""

    exit_code = 2


class NumericError(FedContribError, ArithmeticError):
    """A solve or estimate produced non-finite output."""

    exit_code = 3
