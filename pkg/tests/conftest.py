"""Shared fixtures and the exhaustive k-NN oracle used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from pocketann import HnswConfig, HnswIndex, InMemoryVectorStore, Metric
from pocketann.vectors import distance


def brute_force_knn(vectors_by_key: dict[str, np.ndarray], metric: Metric, query, k: int):
    """Exhaustive k-NN: scan every stored vector, sort by (distance, key).

    Independent of the graph search path by construction; shares only the
    scalar distance function.
    """
    scored = sorted((distance(metric, query, vec), key) for key, vec in vectors_by_key.items())
    return scored[:k]


def store_contents(store) -> dict[str, np.ndarray]:
    keys = sorted(store.key_set())
    result = store.get_batch(keys)
    assert not result.missing
    return dict(result.entries)


def build_index(
    points: np.ndarray,
    metric: Metric = Metric.EUCLIDEAN_SQUARED,
    m: int = 4,
    ef_construction: int = 16,
    seed: int = 42,
    keys: list[str] | None = None,
    cache_config=None,
) -> HnswIndex:
    """In-memory index over ``points`` with zero-padded sequential keys."""
    n, dim = points.shape
    store = InMemoryVectorStore(dim)
    index = HnswIndex.create(
        store,
        HnswConfig(m=m, ef_construction=max(ef_construction, m), metric=metric, seed=seed),
        cache_config,
    )
    if keys is None:
        width = len(str(max(n - 1, 0)))
        keys = [f"k{i:0{width}d}" for i in range(n)]
    index.bulk_insert(keys, points)
    return index


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
