"""Exception types shared across the package."""


class PocketAnnError(Exception):
    """Base class for every error this package raises deliberately."""


class DimensionError(PocketAnnError, ValueError):
    """A vector's dimension does not match the index or store."""


class DegenerateVectorError(PocketAnnError, ValueError):
    """A vector is unusable under the selected metric (e.g. all-zero under cosine)."""


class DuplicateKeyError(PocketAnnError, ValueError):
    """A key is already present in the store or graph."""


class StoreSchemaError(PocketAnnError):
    """An existing store is incompatible with the requested configuration."""


class IoError(PocketAnnError):
    """Underlying storage or stream failure."""


class GraphCorruptionError(PocketAnnError):
    """Graph topology and vector store disagree, or the graph references unknown keys."""


class EmptyIndexError(PocketAnnError):
    """The operation needs at least one indexed element."""


class ParseError(PocketAnnError):
    """A snapshot or corpus record could not be parsed.

    ``line`` is the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SnapshotCorruptionError(PocketAnnError):
    """A snapshot parsed cleanly but violates a graph invariant."""


class VersionError(PocketAnnError):
    """Snapshot format version is not understood by this reader."""
