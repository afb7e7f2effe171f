"""Exception types shared across the package.

Exit-code mapping used by the CLI: validation/contract problems -> 2,
training divergence -> 3, I/O and file-format problems -> 4.
"""


class JtavError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DimensionError(JtavError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(JtavError):
    """Input value outside the mathematical domain (e.g. log of non-positive)."""


class EmptyInputError(JtavError):
    """An operation received an empty input where at least one element is required."""


class ContractError(JtavError):
    """Caller violated an API contract (e.g. backward on a non-scalar)."""


class UninitializedStatsError(JtavError):
    """Eval-mode normalization requested before any training step populated statistics."""


class ValidationError(JtavError):
    """Manifest or configuration failed validation."""


class SamplingError(JtavError):
    """Negative sampling impossible (candidate corpus too small)."""


class TrainingDivergenceError(JtavError):
    """Loss became non-finite during training."""

    exit_code = 3

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class FormatError(JtavError):
    """A binary or text file does not conform to its declared format."""

    exit_code = 4

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class IoError(JtavError):
    """Filesystem level failure (missing file, unreadable path)."""

    exit_code = 4
