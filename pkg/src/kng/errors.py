"""Exception types shared across the package.

The CLI maps these to exit codes: usage/validation problems exit 1,
file/format problems exit 2.
"""


class KngError(Exception):
    """Base class for package errors."""


class ValidationError(KngError):
    """Input violates a documented invariant (bad shape, NaN, bad manifest)."""


class FormatError(KngError):
    """A serialized file is malformed: bad magic, version, truncation, checksum."""


class StateError(KngError):
    """Operation applied to a model in the wrong state."""


class NumericError(KngError):
    """A numerical routine failed beyond recovery (e.g. factorization)."""


class MetricUndefinedError(KngError):
    """Metric has no defined value for the given inputs (e.g. single-class)."""
