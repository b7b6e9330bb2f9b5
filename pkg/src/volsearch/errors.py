"""Exception types shared across the package."""


class VolsearchError(Exception):
    """Base class for all errors raised by this package."""


class ZeroVectorError(VolsearchError):
    """A vector with (near-)zero norm cannot be normalized."""


class UnknownLabelError(VolsearchError):
    """A label id is outside the range covered by the label map."""


class UnknownVolumeError(VolsearchError):
    """A volume id does not exist in the store at hand."""


class DimensionMismatchError(VolsearchError):
    """Vector or matrix dimensions disagree with the store's embedding width."""


class NotNormalizedError(VolsearchError):
    """An embedding row does not have unit L2 norm."""


class StoreFormatError(VolsearchError):
    """Base class for malformed embedding-store files."""


class BadMagicError(StoreFormatError):
    """The file does not start with the expected magic bytes."""


class VersionUnsupportedError(StoreFormatError):
    """The file declares a format version this build cannot read."""


class ChecksumMismatchError(StoreFormatError):
    """The payload bytes do not hash to the checksum in the header."""


class InvalidParamsError(VolsearchError):
    """Index construction parameters are out of their valid range."""


class EmptyIndexError(VolsearchError):
    """A search was issued against an index with no rows."""


class EmptyHitTableError(VolsearchError):
    """An aggregation was issued over a hit table with no entries."""


class RegionAbsentError(VolsearchError):
    """The requested region appears on no slice of the volume."""


class EmptyMatrixError(VolsearchError):
    """A similarity matrix with zero rows or columns has no score."""


class InvalidSpecError(VolsearchError):
    """A synthetic-corpus spec is internally inconsistent."""
