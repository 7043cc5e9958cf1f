"""Synthetic corpora and the deterministic mock embedding.

The corpus format is one JSON record per line: ``{"key": ..., "vector":
[...], "text": ...}`` with a consistent dimension across the file. The mock
embedding maps equal texts to equal unit vectors, which lets tests build
corpora whose nearest neighbor for a given query is known by construction.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Iterator, TextIO

import numpy as np

__all__ = ["synthetic_vectors", "mock_embedding", "write_corpus", "iter_corpus_lines"]


def synthetic_vectors(count: int, dimension: int, seed: int) -> np.ndarray:
    """Uniform [0, 1) float32 matrix, reproducible across runs and platforms."""
    rng = np.random.default_rng(seed)
    return rng.random((count, dimension), dtype=np.float32)


def mock_embedding(text: str, dimension: int) -> list[float]:
    """Deterministic unit-norm embedding of ``text`` (no model involved)."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dimension)
    vec /= np.linalg.norm(vec)
    return [float(x) for x in vec.astype(np.float32)]


def write_corpus(
    out: TextIO,
    count: int,
    dimension: int,
    seed: int = 42,
    with_text: bool = True,
    embed_texts: bool = False,
) -> None:
    """Emit ``count`` corpus records.

    With ``embed_texts`` the vector of each record is the mock embedding of
    its text, so a text query equal to a stored document's text is that
    document's exact nearest neighbor under cosine distance.
    """
    vectors = None if embed_texts else synthetic_vectors(count, dimension, seed)
    width = max(6, len(str(max(count - 1, 0))))
    for i in range(count):
        key = f"doc-{i:0{width}d}"
        text = f"synthetic document {i} of {count} (seed {seed})"
        if embed_texts:
            vector = mock_embedding(text, dimension)
        else:
            vector = [float(x) for x in vectors[i]]
        record: dict = {"key": key, "vector": vector}
        if with_text:
            record["text"] = text
        out.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def iter_corpus_lines(path: str | os.PathLike) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, raw line) for each non-empty corpus line."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                yield line_no, line
