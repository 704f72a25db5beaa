"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration and validation problems
exit 1, storage and format problems exit 2, numerical failures exit 3.
"""


class SlotPruneError(Exception):
    """Base class for all package errors."""


class ConfigError(SlotPruneError):
    """A configuration value violates its documented constraints."""


class ValidationError(SlotPruneError):
    """Runtime data violates a type invariant (shape, finiteness, labels)."""


class ShapeError(ValidationError):
    """Array arguments have inconsistent or unsupported shapes."""


class BoundsError(ValidationError):
    """An index is outside the valid range."""


class FormatError(SlotPruneError):
    """A serialized container has a bad magic, version, or is truncated."""


class StorageError(SlotPruneError):
    """An underlying I/O operation failed."""


class NumericalError(SlotPruneError):
    """A computation produced non-finite intermediates."""


class CapacityError(SlotPruneError):
    """An input exceeds a configured static capacity (e.g. position table)."""


class TrainingError(SlotPruneError):
    """Training diverged or could not proceed."""
