"""Exception types shared across the package.

Every failure mode gets its own class so callers (and the CLI exit-code
mapping) can distinguish usage mistakes, bad data, and numerical trouble.
"""


class HandGcnError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(HandGcnError):
    """Operand shapes do not conform."""


class DegenerateJoint(HandGcnError):
    """A joint-angle triple collapsed: one of its bone vectors has ~zero length."""

    def __init__(self, message, triple=None, source_id=None):
        super().__init__(message)
        self.triple = triple
        self.source_id = source_id


class DegeneratePose(HandGcnError):
    """All landmarks of a pose coincide, so scale normalization is undefined."""

    def __init__(self, message, source_id=None):
        super().__init__(message)
        self.source_id = source_id


class InsufficientBatch(HandGcnError):
    """Batch statistics requested over fewer than two rows."""


class StaleCache(HandGcnError):
    """Backward pass called with labels that do not match the cached forward."""


class EmptyDataset(HandGcnError):
    """Training requested on an empty split."""


class NonFiniteLoss(HandGcnError):
    """Loss became NaN/Inf during training."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class VersionMismatch(HandGcnError):
    """Checkpoint or data file written by an incompatible format version."""


class CorruptFile(HandGcnError):
    """File cannot be decoded; ``byte_offset`` locates the failure when known."""

    def __init__(self, message, byte_offset=None):
        super().__init__(message)
        self.byte_offset = byte_offset


class LabelOutOfRange(HandGcnError):
    """A class index falls outside [0, num_classes)."""


class TooFewSamples(HandGcnError):
    """Fewer samples than requested folds."""


class ParseError(HandGcnError):
    """A data file line failed to parse; carries the 1-based line number."""

    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownLabel(HandGcnError):
    """A label string or index is not part of the class vocabulary."""

    def __init__(self, name):
        super().__init__(f"unknown label: {name!r}")
        self.name = name


class UsageError(HandGcnError):
    """Bad command-line invocation."""
