"""Exception hierarchy shared across the package."""


class IsacError(Exception):
    """Base class for all package errors."""


class DimensionError(IsacError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(IsacError, ValueError):
    """A configuration value is invalid or inconsistent."""


class UsageError(IsacError, RuntimeError):
    """An API was called outside its contract (e.g. backward on a non-scalar)."""


class TrainingError(IsacError, RuntimeError):
    """Training cannot proceed (missing gradients, NaN loss, ...)."""


class DegenerateSampleError(IsacError, ValueError):
    """A sample carries no signal (all-zero window, zero-power truth)."""


class ArchiveError(IsacError, RuntimeError):
    """A named-tensor archive is malformed or mismatched."""


class ImportMismatchError(ArchiveError):
    """Backbone weight import found wrong names or shapes.

    Carries the full offender list so callers can report all problems at once.
    """

    def __init__(self, offenders):
        self.offenders = list(offenders)
        super().__init__(
            "backbone import mismatch: " + "; ".join(self.offenders)
        )
