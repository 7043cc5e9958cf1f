"""pocketann: embedded approximate nearest-neighbor search with disk-backed vectors.

The HNSW graph topology and keys live in RAM; vector payloads live in a
persistent key-value store read through a prefetch cache. Exposed as a
library, a CLI (``pocketann``), an HTTP service, and a browser playground
for prototyping retrieval-augmented generation.
"""

from .cache import CacheConfig, CacheStats, PrefetchCache, default_p
from .errors import (
    DegenerateVectorError,
    DimensionError,
    DuplicateKeyError,
    EmptyIndexError,
    GraphCorruptionError,
    IoError,
    ParseError,
    PocketAnnError,
    SnapshotCorruptionError,
    StoreSchemaError,
    VersionError,
)
from .graph import HnswConfig, HnswGraph
from .index import (
    HnswIndex,
    SearchResult,
    check_consistency,
    create_index_dir,
    open_index_dir,
    save_index_dir,
)
from .prompting import assemble_prompt
from .snapshot import export_index, load_index
from .store import (
    InMemoryVectorStore,
    SqliteVectorStore,
    StoreRecord,
    StoreStats,
    VectorStore,
    open_store,
)
from .vectors import Metric, distance

__version__ = "0.1.0"

__all__ = [
    "CacheConfig",
    "CacheStats",
    "DegenerateVectorError",
    "DimensionError",
    "DuplicateKeyError",
    "EmptyIndexError",
    "GraphCorruptionError",
    "HnswConfig",
    "HnswGraph",
    "HnswIndex",
    "InMemoryVectorStore",
    "IoError",
    "Metric",
    "ParseError",
    "PocketAnnError",
    "PrefetchCache",
    "SearchResult",
    "SnapshotCorruptionError",
    "SqliteVectorStore",
    "StoreRecord",
    "StoreSchemaError",
    "StoreStats",
    "VectorStore",
    "VersionError",
    "assemble_prompt",
    "check_consistency",
    "create_index_dir",
    "default_p",
    "distance",
    "export_index",
    "load_index",
    "open_index_dir",
    "open_store",
    "save_index_dir",
]
