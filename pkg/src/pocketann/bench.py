"""Query benchmarking with a brute-force recall oracle.

The oracle is an exhaustive scan over all stored vectors, computed
independently of the graph. Ties are broken by the lexicographically
smaller key, matching the search path's documented tie-break: the vector
matrix is assembled in key-sorted order and distances are sorted stably.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cache import CacheConfig, default_p
from .index import HnswIndex
from .store import VectorStore
from .vectors import Metric, pairwise_distances

__all__ = ["BenchRow", "collect_vectors", "brute_force_topk", "run_bench"]


@dataclass
class BenchRow:
    ef: int
    p: int
    queries: int
    mean_ms: float
    median_ms: float
    p99_ms: float
    recall: float
    transactions_read: int

    def as_record(self) -> dict:
        return {
            "ef": self.ef,
            "p": self.p,
            "queries": self.queries,
            "mean_ms": round(self.mean_ms, 4),
            "median_ms": round(self.median_ms, 4),
            "p99_ms": round(self.p99_ms, 4),
            "recall": round(self.recall, 4),
            "transactions_read": self.transactions_read,
        }


def collect_vectors(store: VectorStore, keys: list[str], chunk: int = 4096) -> np.ndarray:
    """All vectors for ``keys`` as one float64 matrix, read in chunked batches."""
    matrix = np.empty((len(keys), store.dimension), dtype=np.float64)
    row = 0
    for start in range(0, len(keys), chunk):
        result = store.get_batch(keys[start : start + chunk])
        if result.missing:
            raise KeyError(f"store is missing keys: {result.missing[:5]!r}")
        for _, vec in result.entries:
            matrix[row] = vec
            row += 1
    return matrix


def brute_force_topk(
    matrix: np.ndarray, sorted_keys: list[str], metric: Metric, query: np.ndarray, k: int
) -> list[str]:
    """Exact k nearest keys by exhaustive scan; ``matrix`` rows must follow ``sorted_keys``."""
    dists = pairwise_distances(metric, query, matrix)
    order = np.argsort(dists, kind="stable")[:k]
    return [sorted_keys[i] for i in order]


def run_bench(
    index: HnswIndex,
    queries: np.ndarray,
    k: int,
    ef_list: list[int],
    p_list: list[int | None],
    capacity_factor: int = 8,
) -> list[BenchRow]:
    """Measure latency, recall and read-transaction counts per (ef, p) cell.

    Each cell queries through a fresh cache (capacity = capacity_factor·p),
    runs one untimed warm-up pass, then times a second pass. ``None`` in
    ``p_list`` means the dimension-derived default.
    """
    if len(queries) == 0:
        return []
    graph, store = index.graph, index.store
    sorted_keys = sorted(graph.key_set())
    matrix = collect_vectors(store, sorted_keys)
    truth = [brute_force_topk(matrix, sorted_keys, index.metric, q, k) for q in queries]

    rows = []
    for ef in ef_list:
        for p in p_list:
            eff_p = p if p is not None else default_p(store.dimension)
            cell = HnswIndex(graph, store, CacheConfig(p=eff_p, capacity=capacity_factor * eff_p))
            reads_before = store.stats.transactions_read
            for q in queries:  # warm the cache
                cell.query(q, k, ef=ef)
            latencies = np.empty(len(queries))
            hits = 0
            for i, q in enumerate(queries):
                t0 = time.perf_counter()
                result = cell.query(q, k, ef=ef)
                latencies[i] = (time.perf_counter() - t0) * 1000.0
                hits += len(set(result.keys) & set(truth[i]))
            rows.append(
                BenchRow(
                    ef=ef,
                    p=eff_p,
                    queries=len(queries),
                    mean_ms=float(latencies.mean()),
                    median_ms=float(np.median(latencies)),
                    p99_ms=float(np.percentile(latencies, 99)),
                    recall=hits / (k * len(queries)),
                    transactions_read=store.stats.transactions_read - reads_before,
                )
            )
    return rows
