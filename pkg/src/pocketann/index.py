"""The index: an HNSW graph over a vector store, read through a prefetch cache.

Also provides the on-disk index directory layout used by the CLI and the
service: ``store.db`` (vectors + payloads) plus ``graph.snapshot`` (topology).
The snapshot is written atomically and only after construction completes, so
an interrupted build leaves either a fully consistent index or none at all.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cache import CacheConfig, PrefetchCache
from .errors import DuplicateKeyError, EmptyIndexError, GraphCorruptionError, IoError
from .graph import (
    HnswConfig,
    HnswGraph,
    Node,
    diversity_filter,
    pair_distance_matrix,
    search_layer,
    select_neighbors,
)
from .store import SqliteVectorStore, StoreRecord, VectorStore, open_store
from .vectors import Metric, as_query_vector, as_stored_vector, pairwise_distances

__all__ = [
    "SearchResult",
    "HnswIndex",
    "GRAPH_FILENAME",
    "create_index_dir",
    "open_index_dir",
    "save_index_dir",
    "check_consistency",
]

GRAPH_FILENAME = "graph.snapshot"

ProgressFn = Callable[[int, int], None]


@dataclass
class SearchResult:
    """k-NN answer: unique keys with ascending distances, aligned by position."""

    keys: list[str]
    distances: list[float]

    def __len__(self) -> int:
        return len(self.keys)


class HnswIndex:
    """Approximate nearest-neighbor index over a persistent vector store."""

    def __init__(self, graph: HnswGraph, store: VectorStore, cache_config: CacheConfig | None = None):
        self.graph = graph
        self.store = store
        self.cache = PrefetchCache(
            store, graph, cache_config or CacheConfig.for_dimension(store.dimension)
        )

    @classmethod
    def create(
        cls,
        store: VectorStore,
        config: HnswConfig | None = None,
        cache_config: CacheConfig | None = None,
    ) -> "HnswIndex":
        return cls(HnswGraph(config or HnswConfig()), store, cache_config)

    # -- introspection --------------------------------------------------------

    @property
    def config(self) -> HnswConfig:
        return self.graph.config

    @property
    def metric(self) -> Metric:
        return self.graph.config.metric

    @property
    def dimension(self) -> int:
        return self.store.dimension

    @property
    def count(self) -> int:
        return self.graph.count

    def __len__(self) -> int:
        return self.graph.count

    # -- writes ----------------------------------------------------------------

    def insert(self, key: str, vector, payload: str | None = None) -> None:
        """Insert one element: the vector is durably stored, then linked into the graph."""
        vec = as_stored_vector(vector, self.dimension, self.metric)
        if key in self.graph:
            raise DuplicateKeyError(f"key already indexed: {key!r}")
        self.store.put_batch([StoreRecord(key, vec, payload)])
        self._insert_node(key, vec)

    def bulk_insert(
        self,
        keys: Sequence[str],
        vectors: Sequence,
        payloads: Sequence[str | None] | None = None,
        progress: ProgressFn | None = None,
        should_abort: Callable[[], bool] | None = None,
    ) -> int:
        """Write all vectors in one store transaction, then link sequentially.

        The resulting graph is identical to inserting the same elements one by
        one with the same RNG state. ``progress(done, total)`` fires after each
        element. When ``should_abort()`` turns true the remaining unlinked
        records are removed from the store again (store and graph stay
        consistent) and the number of linked elements is returned.
        """
        if len(keys) != len(vectors):
            raise ValueError(f"got {len(keys)} keys but {len(vectors)} vectors")
        if payloads is not None and len(payloads) != len(keys):
            raise ValueError(f"got {len(keys)} keys but {len(payloads)} payloads")
        if not keys:
            return 0
        seen: set[str] = set()
        for key in keys:
            if key in seen:
                raise DuplicateKeyError(f"duplicate key within batch: {key!r}")
            if key in self.graph:
                raise DuplicateKeyError(f"key already indexed: {key!r}")
            seen.add(key)
        canonical = [as_stored_vector(v, self.dimension, self.metric) for v in vectors]
        records = [
            StoreRecord(key, vec, payloads[i] if payloads is not None else None)
            for i, (key, vec) in enumerate(zip(keys, canonical))
        ]
        self.store.put_batch(records)
        total = len(records)
        done = 0
        for i, (key, vec) in enumerate(zip(keys, canonical)):
            if should_abort is not None and should_abort():
                self.store.delete_keys(list(keys[i:]))
                break
            self._insert_node(key, vec)
            done += 1
            if progress is not None:
                progress(done, total)
        return done

    def _insert_node(self, key: str, stored_vec: np.ndarray) -> None:
        graph = self.graph
        cfg = graph.config
        level = graph.level_gen.next_level()
        node = Node(key, level)
        if graph.entry_point is None:
            graph.nodes[key] = node
            graph.entry_point = key
            graph.max_level = level
            return

        query = stored_vec.astype(np.float64)
        graph.nodes[key] = node
        entries = [graph.entry_point]
        for layer in range(graph.max_level, level, -1):
            nearest = search_layer(graph, self.cache, query, entries, 1, layer)
            entries = [k for _, k in nearest]
        for layer in range(min(level, graph.max_level), -1, -1):
            found = search_layer(graph, self.cache, query, entries, cfg.ef_construction, layer)
            chosen = select_neighbors(self.cache, cfg.metric, query, found, cfg.m, layer)
            node.neighbors[layer] = [k for _, k in chosen]
            cap = cfg.cap(layer)
            for _, nk in chosen:
                neighbor = graph.nodes[nk]
                neighbor.in_refs[layer] += 1
                neighbor.neighbors[layer].append(key)
                node.in_refs[layer] += 1
                if len(neighbor.neighbors[layer]) > cap:
                    self._prune(nk, layer, cap)
            entries = [k for _, k in found]
        if level > graph.max_level:
            graph.entry_point = key
            graph.max_level = level

    def _prune(self, key: str, layer: int, cap: int) -> None:
        """Shrink an overfull neighbor list back to its cap with the diversity heuristic.

        One exception to the pure heuristic: a link that is some node's last
        inbound link on this layer is never severed (the farthest expendable
        entry goes instead), so pruning cannot orphan a reachable node.
        """
        graph = self.graph
        node = graph.nodes[key]
        metric = graph.config.metric
        target, _ = self.cache.fetch_entry(key, layer)
        neighbor_keys = node.neighbors[layer]
        entries = [self.cache.fetch_entry(nk, layer) for nk in neighbor_keys]
        matrix = np.stack([e[0] for e in entries])
        norms = np.array([e[1] for e in entries])
        to_target = pairwise_distances(metric, target, matrix)
        ordered = sorted((float(to_target[i]), nk, i) for i, nk in enumerate(neighbor_keys))
        kept = diversity_filter(ordered, pair_distance_matrix(metric, matrix, norms), cap)
        kept_keys = [k for _, k in kept]
        kept_set = set(kept_keys)
        swapped = False
        for dropped in neighbor_keys:
            if dropped in kept_set or graph.nodes[dropped].in_refs[layer] > 1:
                continue
            # swap out the farthest kept entry that can spare an inbound link
            for i in range(len(kept_keys) - 1, -1, -1):
                candidate = kept_keys[i]
                if graph.nodes[candidate].in_refs[layer] > 1:
                    kept_keys[i] = dropped
                    kept_set.discard(candidate)
                    kept_set.add(dropped)
                    swapped = True
                    break
        if swapped:  # restore nearest-first storage order
            dist_of = {nk: d for d, nk, _ in ordered}
            kept_keys.sort(key=lambda nk: (dist_of[nk], nk))
        for nk in neighbor_keys:
            if nk not in kept_set:
                graph.nodes[nk].in_refs[layer] -= 1
        node.neighbors[layer] = kept_keys

    # -- reads -----------------------------------------------------------------

    def query(self, vector, k: int, ef: int | None = None) -> SearchResult:
        """k nearest neighbors of ``vector``, ascending by (distance, key).

        The candidate-list width defaults to 10·k (capped at the element
        count) and is never below k. Does not mutate the graph.
        """
        if self.graph.count == 0:
            raise EmptyIndexError("cannot query an empty index")
        if not isinstance(k, int) or k < 1:
            raise ValueError(f"k must be a positive integer, got {k!r}")
        if ef is not None and (not isinstance(ef, int) or ef < 1):
            raise ValueError(f"ef must be a positive integer, got {ef!r}")
        query = as_query_vector(vector, self.dimension, self.metric)
        effective_ef = max(ef if ef is not None else min(10 * k, self.graph.count), k)
        entries = [self.graph.entry_point]
        for layer in range(self.graph.max_level, 0, -1):
            nearest = search_layer(self.graph, self.cache, query, entries, 1, layer)
            entries = [key for _, key in nearest]
        found = search_layer(self.graph, self.cache, query, entries, effective_ef, 0)
        top = found[: min(k, self.graph.count)]
        return SearchResult(keys=[key for _, key in top], distances=[d for d, _ in top])

    def payloads_for(self, keys: Sequence[str]) -> list[str | None]:
        """Payload texts aligned with ``keys``; None where no text was stored."""
        result = self.store.get_payloads(keys)
        if result.missing:
            raise GraphCorruptionError(f"store lost keys the graph references: {result.missing[:5]!r}")
        by_key = dict(result.entries)
        return [by_key[key] for key in keys]


# -- index directories ----------------------------------------------------------


def create_index_dir(
    path: str | os.PathLike,
    dimension: int,
    config: HnswConfig | None = None,
    cache_config: CacheConfig | None = None,
) -> HnswIndex:
    """Create a fresh on-disk index under ``path`` (no snapshot until saved)."""
    p = os.fspath(path)
    if os.path.exists(os.path.join(p, GRAPH_FILENAME)):
        raise IoError(f"index already exists at {p}")
    os.makedirs(p, exist_ok=True)
    store = open_store(p, dimension)
    return HnswIndex.create(store, config, cache_config)


def save_index_dir(index: HnswIndex) -> str:
    """Atomically write the graph snapshot next to the index's store file."""
    from .snapshot import export_index

    store = index.store
    if not isinstance(store, SqliteVectorStore):
        raise IoError("only disk-backed indexes can be saved to a directory")
    directory = os.path.dirname(os.path.abspath(store.path))
    final = os.path.join(directory, GRAPH_FILENAME)
    tmp = final + ".tmp"
    with open(tmp, "wb") as sink:
        export_index(index.graph, store, include_vectors=False, sink=sink)
        sink.flush()
        os.fsync(sink.fileno())
    os.replace(tmp, final)
    return final


def open_index_dir(
    path: str | os.PathLike,
    cache_config: CacheConfig | None = None,
    reconcile: bool = False,
) -> HnswIndex:
    """Open an index directory written by :func:`save_index_dir`.

    With ``reconcile`` set, store records that never made it into the graph
    (an interrupted add) are dropped so the key sets agree again; otherwise
    any store/graph divergence raises ``GraphCorruptionError``.
    """
    from .snapshot import load_index, read_header

    p = os.fspath(path)
    snap_path = os.path.join(p, GRAPH_FILENAME)
    if not os.path.isfile(snap_path):
        raise IoError(f"no index at {p}: missing {GRAPH_FILENAME} (incomplete or absent build)")
    with open(snap_path, "rb") as fh:
        header = read_header(fh)
    store = open_store(p, header.dimension)
    try:
        with open(snap_path, "rb") as fh:
            graph = load_index(fh, store=None)
    except BaseException:
        store.close()
        raise
    graph_keys = graph.key_set()
    store_keys = store.key_set()
    lost = graph_keys - store_keys
    if lost:
        store.close()
        raise GraphCorruptionError(f"graph references keys missing from the store: {sorted(lost)[:5]!r}")
    orphans = store_keys - graph_keys
    if orphans:
        if not reconcile:
            store.close()
            raise GraphCorruptionError(
                f"store holds {len(orphans)} keys the graph lacks (interrupted add?); "
                "open with reconcile=True to drop them"
            )
        store.delete_keys(sorted(orphans))
    return HnswIndex(graph, store, cache_config)


def check_consistency(index: HnswIndex) -> tuple[bool, set[str], set[str]]:
    """Return (consistent, only_in_store, only_in_graph) for store/graph key sets."""
    store_keys = index.store.key_set()
    graph_keys = index.graph.key_set()
    return (store_keys == graph_keys, store_keys - graph_keys, graph_keys - store_keys)
