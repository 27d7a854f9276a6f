"""Exception types shared across the package."""


class ClaraError(Exception):
    """Base class for errors raised by this package."""


class CorpusError(ClaraError, ValueError):
    """Malformed corpus, vocabulary, or report data."""


class EmptyQueryError(ClaraError, ValueError):
    """A retrieval query was built or scored with no terms."""


class ShapeMismatchError(ClaraError, ValueError):
    """An array did not have the shape a model expects."""


class FormatError(ClaraError, ValueError):
    """A binary file failed magic/version/structure validation."""


class SplitOverlapError(ClaraError, ValueError):
    """Train/validation/test splits share a patient."""


class TrainingError(ClaraError, RuntimeError):
    """Training diverged or produced non-finite values."""
