"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: validation/usage problems exit 1,
numeric failures exit 2, file format and I/O problems exit 3.
"""


class EmbfuseError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EmbfuseError):
    """Invalid arguments, configs, or data that violates a contract."""


class DimensionError(ValidationError):
    """Shape or dimensionality mismatch between operands."""


class ParseError(ValidationError):
    """Malformed text input; carries a line number when available."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BatchSizeError(ValidationError):
    """Batch too small for a pairwise loss (needs at least two rows)."""


class FormatError(EmbfuseError):
    """Binary file does not follow the expected format."""


class CorruptionError(FormatError):
    """File structure is recognized but the payload is inconsistent."""


class UnsupportedDtypeError(FormatError):
    """Valid header but a dtype code this build does not handle."""


class UndefinedSimilarityError(EmbfuseError):
    """Cosine similarity requested against a zero vector."""


class NormalizationError(EmbfuseError):
    """Row normalization hit an all-zero row."""


class TrainingDivergedError(EmbfuseError):
    """Training produced a non-finite loss or parameters."""

    def __init__(self, epoch, detail=""):
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.epoch = epoch
