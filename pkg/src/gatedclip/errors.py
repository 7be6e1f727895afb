"""Exception types shared across the package."""


class GatedClipError(Exception):
    """Base class for all errors raised by this package."""


class EmbeddingFormatError(GatedClipError):
    """Base class for embedding-file format violations."""


class BadMagicError(EmbeddingFormatError):
    """File does not start with the GCEB magic bytes."""


class UnsupportedVersionError(EmbeddingFormatError):
    """File declares a format version this reader does not understand."""


class TruncatedFileError(EmbeddingFormatError):
    """File ends before the declared payload is complete."""


class NormViolationError(EmbeddingFormatError):
    """An embedding vector is not unit length within tolerance."""


class InvariantError(GatedClipError):
    """A domain-type invariant does not hold."""


class UnlabeledDataError(GatedClipError):
    """An operation requiring labels encountered an unlabeled record."""


class DegenerateVectorError(GatedClipError):
    """Cosine similarity is undefined for a near-zero vector."""


class UndefinedMetricError(GatedClipError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""


class NonFiniteGradientError(GatedClipError):
    """A gradient buffer contains NaN or infinity."""


class NonFiniteLossError(GatedClipError):
    """Training produced a non-finite loss value."""


class CheckpointError(GatedClipError):
    """Checkpoint file is corrupt or unreadable."""


class CheckpointMismatchError(CheckpointError):
    """Checkpoint contents do not match the expected model configuration."""
