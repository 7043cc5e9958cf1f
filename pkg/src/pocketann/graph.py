"""HNSW graph topology and the greedy layered-search primitives.

Only keys and adjacency live here; vector payloads are read through the
prefetch cache. Distances tie-break on the lexicographically smaller key in
every ordered structure (frontier, result set, pruning), which makes graph
construction and search fully deterministic for a fixed seed.
"""

from __future__ import annotations

import heapq
import math
from bisect import insort
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .cache import PrefetchCache
from .errors import DegenerateVectorError, GraphCorruptionError
from .vectors import Metric

__all__ = [
    "HnswConfig",
    "LevelGenerator",
    "Node",
    "HnswGraph",
    "level_from_uniform",
    "search_layer",
    "select_neighbors",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> int:
    z = state & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def level_from_uniform(u: float, m_l: float) -> int:
    """Layer level for a uniform draw u ∈ (0, 1]: floor(−ln(u) · mL)."""
    if not 0.0 < u <= 1.0:
        raise ValueError(f"u must be in (0, 1], got {u}")
    return int(math.floor(-math.log(u) * m_l))


class LevelGenerator:
    """Deterministic, resumable source of layer levels.

    Draw i is derived from a SplitMix64 stream at position i, so the full
    generator state is just (seed, draws) — the cursor a snapshot stores.
    """

    def __init__(self, seed: int, m_l: float, draws: int = 0):
        self.seed = seed & _MASK64
        self.m_l = m_l
        self.draws = draws

    def next_level(self) -> int:
        self.draws += 1
        bits = _splitmix64((self.seed + _GAMMA * self.draws) & _MASK64)
        u = 1.0 - (bits >> 11) * 2.0**-53  # in (0, 1]; u == 1 maps to level 0
        return level_from_uniform(u, self.m_l)


@dataclass(frozen=True)
class HnswConfig:
    """Construction parameters. m_max0 defaults to 2·m, m_l to 1/ln(m)."""

    m: int = 16
    m_max0: int | None = None
    ef_construction: int = 200
    m_l: float | None = None
    metric: Metric = Metric.COSINE
    seed: int = 42

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.ef_construction < self.m:
            raise ValueError(f"ef_construction must be >= m, got {self.ef_construction} < {self.m}")
        if self.m_max0 is None:
            object.__setattr__(self, "m_max0", 2 * self.m)
        elif self.m_max0 < self.m:
            raise ValueError(f"m_max0 must be >= m, got {self.m_max0} < {self.m}")
        if self.m_l is None:
            object.__setattr__(self, "m_l", 1.0 / math.log(self.m))
        elif self.m_l <= 0:
            raise ValueError(f"m_l must be positive, got {self.m_l}")
        object.__setattr__(self, "metric", Metric(self.metric))

    def cap(self, layer: int) -> int:
        return self.m_max0 if layer == 0 else self.m


@dataclass
class Node:
    key: str
    level: int
    # neighbors[layer] for layers 0..level, each list capped at config.cap(layer)
    neighbors: list[list[str]] = field(default_factory=list)
    # inbound-link counts per layer (how many other lists reference this key);
    # derived bookkeeping, recomputed after a snapshot load
    in_refs: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.neighbors:
            self.neighbors = [[] for _ in range(self.level + 1)]
        if not self.in_refs:
            self.in_refs = [0] * (self.level + 1)


class HnswGraph:
    """RAM-resident multilayer adjacency over string keys."""

    def __init__(self, config: HnswConfig, rng_cursor: int = 0):
        self.config = config
        self.nodes: dict[str, Node] = {}
        self.entry_point: str | None = None
        self.max_level: int = -1
        self.level_gen = LevelGenerator(config.seed, config.m_l, draws=rng_cursor)

    @property
    def count(self) -> int:
        return len(self.nodes)

    def __contains__(self, key: str) -> bool:
        return key in self.nodes

    def neighbors(self, key: str, layer: int) -> Sequence[str]:
        try:
            node = self.nodes[key]
        except KeyError:
            raise GraphCorruptionError(f"unknown graph key: {key!r}") from None
        if layer > node.level:
            return ()
        return node.neighbors[layer]

    def key_set(self) -> set[str]:
        return set(self.nodes)

    def rebuild_in_refs(self) -> None:
        """Recompute inbound-link counts from the adjacency lists (after a load)."""
        for node in self.nodes.values():
            node.in_refs = [0] * (node.level + 1)
        for node in self.nodes.values():
            for layer, nbrs in enumerate(node.neighbors):
                for nk in nbrs:
                    self.nodes[nk].in_refs[layer] += 1

    def level_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for node in self.nodes.values():
            hist[node.level] = hist.get(node.level, 0) + 1
        return dict(sorted(hist.items()))

    def validate(self) -> None:
        """Check every structural invariant; raise GraphCorruptionError on violation."""
        if (self.entry_point is None) != (self.count == 0):
            raise GraphCorruptionError("entry point must be present iff the graph is non-empty")
        if self.entry_point is not None:
            entry = self.nodes.get(self.entry_point)
            if entry is None or entry.level != self.max_level:
                raise GraphCorruptionError("entry point must exist at the graph's maximum level")
        elif self.max_level != -1:
            raise GraphCorruptionError("empty graph must have max level -1")
        for key, node in self.nodes.items():
            if node.level < 0 or len(node.neighbors) != node.level + 1:
                raise GraphCorruptionError(f"node {key!r} must carry layers 0..{node.level}")
            if node.level > self.max_level:
                raise GraphCorruptionError(f"node {key!r} exceeds the graph's maximum level")
            for layer, nbrs in enumerate(node.neighbors):
                if len(nbrs) > self.config.cap(layer):
                    raise GraphCorruptionError(f"node {key!r} exceeds the layer-{layer} neighbor cap")
                if len(set(nbrs)) != len(nbrs):
                    raise GraphCorruptionError(f"node {key!r} has duplicate neighbors on layer {layer}")
                for nk in nbrs:
                    if nk == key:
                        raise GraphCorruptionError(f"node {key!r} links to itself on layer {layer}")
                    other = self.nodes.get(nk)
                    if other is None:
                        raise GraphCorruptionError(f"node {key!r} links to unknown key {nk!r}")
                    if other.level < layer:
                        raise GraphCorruptionError(
                            f"node {key!r} links to {nk!r} on layer {layer}, above that node's level"
                        )


def entry_distance_to(metric: Metric, query) -> Callable[[tuple[np.ndarray, float]], float]:
    """Distance closure over cache entries (vector, norm), bitwise identical
    to :func:`vectors.distance` on the same operands.

    The cached norm replaces one dot product per call, which is most of the
    construction loop's arithmetic under cosine.
    """
    q = np.asarray(query, dtype=np.float64)
    dot = np.dot
    if metric is Metric.EUCLIDEAN_SQUARED:

        def dist(entry: tuple[np.ndarray, float]) -> float:
            d = q - entry[0]
            return float(dot(d, d))

    elif metric is Metric.COSINE_NORMALIZED:

        def dist(entry: tuple[np.ndarray, float]) -> float:
            return max(0.0, 1.0 - float(dot(q, entry[0])))

    elif metric is Metric.COSINE:
        qn = math.sqrt(float(dot(q, q)))
        if qn == 0.0:
            raise DegenerateVectorError("cosine distance is undefined for a zero vector")

        def dist(entry: tuple[np.ndarray, float]) -> float:
            nv = entry[1]
            if nv == 0.0:
                raise DegenerateVectorError("cosine distance is undefined for a zero vector")
            return max(0.0, 1.0 - float(dot(q, entry[0])) / (qn * nv))

    else:
        raise ValueError(f"unknown metric: {metric!r}")
    return dist


def search_layer(
    graph: HnswGraph,
    cache: PrefetchCache,
    query,
    entry_keys: Iterable[str],
    ef: int,
    layer: int,
) -> list[tuple[float, str]]:
    """Best-first expansion on one layer.

    Keeps a frontier ordered by ascending (distance, key) and a result set of
    at most ``ef`` entries; expands the nearest frontier node until its
    distance exceeds the worst retained result. Returns (distance, key)
    pairs ascending. All vector reads go through the cache.
    """
    dist = entry_distance_to(graph.config.metric, query)
    fetch = cache.fetch_entry
    nodes = graph.nodes
    push, pop = heapq.heappush, heapq.heappop
    visited: set[str] = set()
    frontier: list[tuple[float, str]] = []
    results: list[tuple[float, str]] = []  # ascending; results[-1] is the worst kept

    for key in entry_keys:
        if key in visited:
            continue
        if key not in nodes:
            raise GraphCorruptionError(f"unknown entry key: {key!r}")
        visited.add(key)
        d = dist(fetch(key, layer))
        push(frontier, (d, key))
        insort(results, (d, key))
    del results[ef:]

    while frontier:
        pair = pop(frontier)
        if len(results) >= ef and pair > results[-1]:
            break
        layers = nodes[pair[1]].neighbors
        if layer >= len(layers):
            continue
        for nk in layers[layer]:
            if nk in visited:
                continue
            visited.add(nk)
            nd = dist(fetch(nk, layer))
            if len(results) < ef:
                push(frontier, (nd, nk))
                insort(results, (nd, nk))
            elif (nd, nk) < results[-1]:
                push(frontier, (nd, nk))
                insort(results, (nd, nk))
                results.pop()
    return results


# Candidate sets up to this size take the precomputed pair-matrix path in
# select_neighbors; larger sets check candidates incrementally and stop as
# soon as m are accepted.
_PAIR_MATRIX_LIMIT = 128


def pair_distance_matrix(metric: Metric, matrix: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """All-pairs distances between rows of ``matrix`` (internal, Gram-based)."""
    gram = matrix @ matrix.T
    if metric is Metric.EUCLIDEAN_SQUARED:
        sq = np.einsum("ii->i", gram)
        return np.maximum(0.0, sq[:, None] + sq[None, :] - 2.0 * gram)
    if metric is Metric.COSINE_NORMALIZED:
        return np.maximum(0.0, 1.0 - gram)
    if metric is Metric.COSINE:
        return np.maximum(0.0, 1.0 - gram / np.outer(norms, norms))
    raise ValueError(f"unknown metric: {metric!r}")


def diversity_filter(
    ordered: Sequence[tuple[float, str, int]], pair: np.ndarray, m: int
) -> list[tuple[float, str]]:
    """The acceptance rule over a precomputed pair-distance matrix.

    ``ordered`` holds (distance-to-target, key, row-index) ascending. A
    candidate is accepted iff it is strictly closer to the target than to
    every already-accepted candidate; remaining slots are backfilled with
    the nearest rejected candidates.
    """
    selected: list[tuple[float, str]] = []
    selected_idx: list[int] = []
    rejected: list[tuple[float, str]] = []
    for d, key, i in ordered:
        if len(selected) >= m:
            break
        row = pair[i]
        accept = True
        for j in selected_idx:
            if row[j] <= d:
                accept = False
                break
        if accept:
            selected.append((d, key))
            selected_idx.append(i)
        else:
            rejected.append((d, key))
    for d, key in rejected:
        if len(selected) >= m:
            break
        selected.append((d, key))
    return sorted(selected)


def select_neighbors(
    cache: PrefetchCache,
    metric: Metric,
    target,
    candidates: Sequence[tuple[float, str]],
    m: int,
    layer: int,
) -> list[tuple[float, str]]:
    """Diversity-aware selection of up to ``m`` candidates.

    ``candidates`` must be sorted ascending by (distance-to-target, key). A
    candidate is accepted iff it is strictly closer to the target than to
    every already-accepted one; leftover slots are backfilled with the
    nearest rejected candidates. The result is re-sorted ascending so stored
    neighbor lists stay nearest-first.
    """
    n = len(candidates)
    if n <= m:
        return sorted(candidates)

    if n <= _PAIR_MATRIX_LIMIT:
        entries = [cache.fetch_entry(key, layer) for _, key in candidates]
        matrix = np.stack([e[0] for e in entries])
        norms = np.array([e[1] for e in entries])
        pair = pair_distance_matrix(metric, matrix, norms)
        ordered = [(d, key, i) for i, (d, key) in enumerate(candidates)]
        return diversity_filter(ordered, pair, m)

    # incremental path: one mat-vec per processed candidate, early stop at m
    selected: list[tuple[float, str]] = []
    rejected: list[tuple[float, str]] = []
    use_cos = metric is Metric.COSINE
    n_sel = 0
    sel_mat = sel_norms = None
    for d, key in candidates:
        if n_sel >= m:
            break
        vec, norm = cache.fetch_entry(key, layer)
        if n_sel == 0:
            sel_mat = np.empty((m, vec.shape[0]), dtype=np.float64)
            sel_norms = np.empty(m, dtype=np.float64) if use_cos else None
            accept = True
        else:
            rows = sel_mat[:n_sel]
            if metric is Metric.EUCLIDEAN_SQUARED:
                diff = rows - vec
                pair_d = np.einsum("ij,ij->i", diff, diff)
            elif metric is Metric.COSINE_NORMALIZED:
                pair_d = 1.0 - rows @ vec
            else:
                pair_d = 1.0 - (rows @ vec) / (sel_norms[:n_sel] * norm)
            accept = bool(np.all(pair_d > d))
        if accept:
            sel_mat[n_sel] = vec
            if use_cos:
                sel_norms[n_sel] = norm
            n_sel += 1
            selected.append((d, key))
        else:
            rejected.append((d, key))
    for d, key in rejected:
        if len(selected) >= m:
            break
        selected.append((d, key))
    return sorted(selected)
