"""Bounded in-RAM vector cache with graph-neighbor prefetch.

A cache miss costs one batched store read that pulls the missed key plus up
to p−1 of its neighbors on the current graph layer, so the greedy search's
consecutive reads collapse into few transactions. The cache is transparent:
for a fixed graph and workload, search results are identical for every
(p, capacity) setting — only the counters change.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import GraphCorruptionError
from .store import VectorStore

__all__ = ["CacheConfig", "CacheStats", "PrefetchCache", "default_p"]

# Prefetch batches target about 1 MiB of float32 vector data.
_TARGET_BATCH_BYTES = 1 << 20
_MIN_P = 8
_MAX_P = 2048


def default_p(dimension: int) -> int:
    """Dimension-derived prefetch batch size, clamped to [8, 2048]."""
    if dimension < 1:
        raise ValueError(f"dimension must be positive, got {dimension}")
    return min(_MAX_P, max(_MIN_P, _TARGET_BATCH_BYTES // (4 * dimension)))


@dataclass(frozen=True)
class CacheConfig:
    """p is the prefetch batch size; capacity bounds resident vectors (None = unbounded)."""

    p: int
    capacity: int | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"prefetch batch size must be >= 1, got {self.p}")
        if self.capacity is not None and self.capacity < self.p:
            raise ValueError(f"capacity {self.capacity} must be >= p {self.p}")

    @classmethod
    def for_dimension(cls, dimension: int, p: int | None = None, capacity: int | None = None) -> "CacheConfig":
        """Defaults: dimension-derived p, capacity 8·p (several expansion working sets)."""
        eff_p = p if p is not None else default_p(dimension)
        return cls(p=eff_p, capacity=capacity if capacity is not None else 8 * eff_p)


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    prefetch_batches: int = 0


class NeighborSource(Protocol):
    def neighbors(self, key: str, layer: int) -> Sequence[str]: ...


class PrefetchCache:
    """LRU cache of vectors keyed by store key.

    Entries hold float64 copies of the store's float32 vectors (values are
    identical; float32→float64 is exact) together with their precomputed
    norms, so the distance hot path computes one dot product per pair.
    Internally serialized: at most one store transaction is in flight per
    cache, and results are independent of interleaving.
    """

    def __init__(self, store: VectorStore, graph: NeighborSource, config: CacheConfig):
        self._store = store
        self._graph = graph
        self.config = config
        self.stats = CacheStats()
        # key -> (float64 vector, euclidean norm)
        self._entries: OrderedDict[str, tuple[np.ndarray, float]] = OrderedDict()
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def fetch(self, key: str, layer: int) -> np.ndarray:
        """Vector for ``key``, batch-prefetching its layer neighbors on a miss."""
        return self.fetch_entry(key, layer)[0]

    def fetch_entry(self, key: str, layer: int) -> tuple[np.ndarray, float]:
        """(vector, norm) for ``key``; same prefetch-on-miss policy as fetch."""
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                self._entries.move_to_end(key)
                self.stats.hits += 1
                return entry
            self.stats.misses += 1
            want = [key]
            for nk in self._graph.neighbors(key, layer):
                if len(want) >= self.config.p:
                    break
                if nk != key and nk not in self._entries and nk not in want:
                    want.append(nk)
            fetched = self._load_batch(want)
            # Insert prefetched neighbors first so the requested key lands
            # most-recent and survives eviction at capacity == p.
            for nk in want[1:]:
                self._entries[nk] = fetched[nk]
            self._entries[key] = fetched[key]
            self._evict()
            return fetched[key]

    def pin_batch(self, keys: Sequence[str]) -> None:
        """Warm the cache with ``keys`` in one batched read; no-op when empty."""
        with self._lock:
            fresh = []
            for key in keys:
                if key in self._entries:
                    self._entries.move_to_end(key)
                elif key not in fresh:
                    fresh.append(key)
            if not fresh:
                return
            fetched = self._load_batch(fresh)
            for key in fresh:
                self._entries[key] = fetched[key]
            self._evict()

    def _load_batch(self, keys: list[str]) -> dict[str, tuple[np.ndarray, float]]:
        result = self._store.get_batch(keys)
        if result.missing:
            raise GraphCorruptionError(
                f"graph references keys absent from the store: {sorted(result.missing)[:5]!r}"
            )
        self.stats.prefetch_batches += 1
        out = {}
        for key, vec in result.entries:
            v64 = vec.astype(np.float64)
            # the exact expression the scalar distance uses, for bitwise parity
            out[key] = (v64, math.sqrt(float(np.dot(v64, v64))))
        return out

    def _evict(self) -> None:
        cap = self.config.capacity
        if cap is None:
            return
        while len(self._entries) > cap:
            self._entries.popitem(last=False)
