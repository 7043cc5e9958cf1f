"""Vector representation and distance functions.

Vectors travel through the package as 1-D numpy arrays. Stored vectors are
canonicalized to little-endian float32 (the on-disk encoding); distance
arithmetic always accumulates in float64 regardless of input precision, so
high-dimensional dot products do not lose recall to cancellation.
"""

from __future__ import annotations

import enum
import math
from typing import Sequence

import numpy as np

from .errors import DegenerateVectorError, DimensionError

__all__ = [
    "Metric",
    "as_stored_vector",
    "as_query_vector",
    "distance",
    "pairwise_distances",
]

STORAGE_DTYPE = np.dtype("<f4")


class Metric(str, enum.Enum):
    """Distance functions understood by the index.

    ``COSINE_NORMALIZED`` skips the norm division and may only be selected
    when the caller guarantees all vectors (including queries) are unit-norm.
    """

    COSINE = "cosine"
    COSINE_NORMALIZED = "cosine-normalized"
    EUCLIDEAN_SQUARED = "euclidean-squared"


def as_stored_vector(
    components: Sequence[float] | np.ndarray,
    dimension: int | None = None,
    metric: Metric | None = None,
) -> np.ndarray:
    """Canonicalize ``components`` to the storage dtype and validate it.

    Returns a fresh float32 array. Raises ``DimensionError`` when the shape is
    wrong or does not match ``dimension``, and ``DegenerateVectorError`` when a
    component is non-finite or the vector is all-zero under a cosine metric.
    """
    with np.errstate(over="ignore"):  # overflow to inf is caught by the finite check
        arr = np.asarray(components, dtype=STORAGE_DTYPE)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"expected a 1-D vector with at least one component, got shape {arr.shape}")
    if dimension is not None and arr.size != dimension:
        raise DimensionError(f"vector has dimension {arr.size}, expected {dimension}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVectorError("vector components must be finite")
    if metric is Metric.COSINE and not arr.any():
        raise DegenerateVectorError("all-zero vector is not usable under the cosine metric")
    return arr.copy() if arr is components else arr


def as_query_vector(
    components: Sequence[float] | np.ndarray,
    dimension: int | None = None,
    metric: Metric | None = None,
) -> np.ndarray:
    """Validate a query vector and return it as float64 (full input precision)."""
    arr = np.asarray(components, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"expected a 1-D vector with at least one component, got shape {arr.shape}")
    if dimension is not None and arr.size != dimension:
        raise DimensionError(f"query has dimension {arr.size}, expected {dimension}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVectorError("vector components must be finite")
    if metric is Metric.COSINE and not arr.any():
        raise DegenerateVectorError("all-zero vector is not usable under the cosine metric")
    return arr


def distance(metric: Metric, a: np.ndarray | Sequence[float], b: np.ndarray | Sequence[float]) -> float:
    """Distance between two vectors under ``metric``; deterministic for fixed inputs."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape[0] if x.ndim == 1 else x.shape} vs {y.shape[0] if y.ndim == 1 else y.shape}")
    if metric is Metric.EUCLIDEAN_SQUARED:
        d = x - y
        return float(np.dot(d, d))
    if metric is Metric.COSINE_NORMALIZED:
        # Caller asserts unit norms; clamp only shields the ulp below zero.
        return max(0.0, 1.0 - float(np.dot(x, y)))
    if metric is Metric.COSINE:
        na = math.sqrt(float(np.dot(x, x)))
        nb = math.sqrt(float(np.dot(y, y)))
        if na == 0.0 or nb == 0.0:
            raise DegenerateVectorError("cosine distance is undefined for a zero vector")
        return max(0.0, 1.0 - float(np.dot(x, y)) / (na * nb))
    raise ValueError(f"unknown metric: {metric!r}")


def pairwise_distances(metric: Metric, query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Distances from ``query`` to every row of ``matrix`` as a float64 array.

    Vectorized path used by brute-force oracles and benchmarks; the graph
    search itself computes distances pairwise through :func:`distance`.
    """
    q = np.asarray(query, dtype=np.float64)
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or q.ndim != 1 or m.shape[1] != q.shape[0]:
        raise DimensionError(f"matrix of shape {m.shape} incompatible with query of dimension {q.shape}")
    if metric is Metric.EUCLIDEAN_SQUARED:
        diff = m - q
        return np.einsum("ij,ij->i", diff, diff)
    dots = m @ q
    if metric is Metric.COSINE_NORMALIZED:
        return np.maximum(0.0, 1.0 - dots)
    if metric is Metric.COSINE:
        qn = math.sqrt(float(np.dot(q, q)))
        mn = np.sqrt(np.einsum("ij,ij->i", m, m))
        if qn == 0.0 or not mn.all():
            raise DegenerateVectorError("cosine distance is undefined for a zero vector")
        return np.maximum(0.0, 1.0 - dots / (mn * qn))
    raise ValueError(f"unknown metric: {metric!r}")
