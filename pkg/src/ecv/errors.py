"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``error_class`` so the CLI can
emit a single stable line on failure.
"""

from __future__ import annotations


class EcvError(Exception):
    """Base class for all package errors."""

    error_class = "error"


class InvalidParameterError(EcvError):
    """An argument violates a documented precondition."""

    error_class = "invalid-parameter"


class DataFormatError(EcvError):
    """Input data could not be read or parsed."""

    error_class = "data-format"


class NumericError(EcvError):
    """A computation produced or would produce non-finite results."""

    error_class = "numeric"


class OobExhaustedError(EcvError):
    """No out-of-bag rows remain for any member or pair."""

    error_class = "oob-exhausted"


class TuningFailedError(EcvError):
    """Selection could not produce a valid configuration."""

    error_class = "tuning-failed"
