"""Exception types shared across the package.

Plain ``ValueError`` is used for bad arguments (wrong shapes, out-of-range
parameters, empty inputs).  The classes below mark problems with the *data*
rather than the call.
"""


class DivdetError(Exception):
    """Base class for package-specific errors."""


class FormatError(DivdetError):
    """A file does not conform to its documented on-disk layout."""


class IntegrityError(DivdetError):
    """Structurally valid data that contradicts itself (dimension or label
    mismatches, duplicate ids, truncated payloads)."""


class DataError(DivdetError):
    """A record whose content cannot be used (e.g. a zero-norm vector)."""


class PairingError(DivdetError):
    """Branch features that cannot be joined (id mismatch, missing branch)."""
