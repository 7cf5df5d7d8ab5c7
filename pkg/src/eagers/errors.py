"""Exception hierarchy shared across the package.

Every error raised by this package derives from EagersError so callers can
catch one base type at the CLI boundary and map it to an exit code.
"""


class EagersError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGeometryError(EagersError):
    """A grid, cell index, or rectangle failed validation."""


class InvalidSelectionError(EagersError):
    """A region selection is unusable, e.g. it covers no pixels."""


class ShapeMismatchError(EagersError):
    """Two vectors or matrices have incompatible dimensions."""


class DegenerateVectorError(EagersError):
    """A vector has zero norm and no cosine direction."""


class IncompleteEmbeddingError(EagersError):
    """An embedder is missing a required text or cell vector."""


class InvalidReferenceError(EagersError):
    """A metric was given an empty or malformed reference set."""


class EmptyRunError(EagersError):
    """An aggregate was requested over zero judged questions."""


class DatasetFormatError(EagersError):
    """A dataset file is malformed or internally inconsistent."""


class EmptyDatasetError(EagersError):
    """A dataset loaded successfully but contains no usable records."""


class BackendUnavailableError(EagersError):
    """The inference backend could not be reached after retries."""


class ProtocolError(EagersError):
    """The backend answered with a response that violates the wire contract."""


class ConfigError(EagersError):
    """A run configuration is invalid or references unknown components."""
