"""Versioned index snapshots: byte-deterministic export, streaming load.

A snapshot is newline-delimited UTF-8 JSON: one header record, one record
per node sorted by key, then (iff vectors are included) one vector record
per key sorted by key. Numbers use shortest-roundtrip decimal encoding, so
float32-stored components survive exactly. The full field-by-field layout
is documented in FORMAT.md at the repository root.

The loader consumes the byte stream incrementally — any chunking, down to
one byte at a time, yields the same result — and never buffers more than
one record beyond the graph being built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Union

from .cache import default_p
from .errors import (
    GraphCorruptionError,
    IoError,
    ParseError,
    SnapshotCorruptionError,
    StoreSchemaError,
    VersionError,
)
from .graph import HnswConfig, HnswGraph, Node
from .store import StoreRecord, VectorStore
from .vectors import Metric

__all__ = ["FORMAT_VERSION", "SnapshotHeader", "export_index", "load_index", "read_header"]

FORMAT_VERSION = 1

ByteSource = Union[BinaryIO, Iterable[bytes]]

_READ_CHUNK = 1 << 16
_MAX_RECORD_BYTES = 1 << 26  # refuse records over 64 MiB instead of buffering forever


@dataclass(frozen=True)
class SnapshotHeader:
    format_version: int
    dimension: int
    metric: str
    m: int
    m_max0: int
    ef_construction: int
    m_l: float
    seed: int
    rng_cursor: int
    entry_point: str | None
    max_level: int
    node_count: int
    vectors_included: bool


def _dump(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def export_index(graph: HnswGraph, store: VectorStore, include_vectors: bool, sink: BinaryIO) -> None:
    """Write a snapshot of ``graph`` to ``sink``; byte-deterministic per graph state."""
    cfg = graph.config
    header = {
        "type": "header",
        "formatVersion": FORMAT_VERSION,
        "dimension": store.dimension,
        "metric": cfg.metric.value,
        "m": cfg.m,
        "mMax0": cfg.m_max0,
        "efConstruction": cfg.ef_construction,
        "mL": cfg.m_l,
        "seed": cfg.seed,
        "rngCursor": graph.level_gen.draws,
        "entryPoint": graph.entry_point,
        "maxLevel": graph.max_level,
        "nodeCount": graph.count,
        "vectorsIncluded": bool(include_vectors),
    }
    ordered_keys = sorted(graph.nodes)
    try:
        sink.write(_dump(header))
        for key in ordered_keys:
            node = graph.nodes[key]
            sink.write(
                _dump(
                    {
                        "type": "node",
                        "key": key,
                        "level": node.level,
                        "neighbors": node.neighbors,
                    }
                )
            )
        if include_vectors:
            batch = default_p(store.dimension)
            for start in range(0, len(ordered_keys), batch):
                chunk = ordered_keys[start : start + batch]
                result = store.get_batch(chunk)
                if result.missing:
                    raise GraphCorruptionError(
                        f"graph references keys absent from the store: {result.missing[:5]!r}"
                    )
                for key, vec in result.entries:
                    sink.write(
                        _dump(
                            {
                                "type": "vector",
                                "key": key,
                                "components": [float(x) for x in vec],
                            }
                        )
                    )
    except OSError as exc:
        raise IoError(f"snapshot write failed: {exc}") from exc


class _LineReader:
    """Reassembles newline-delimited records from arbitrarily chunked bytes."""

    def __init__(self, source: ByteSource):
        if hasattr(source, "read"):
            def chunks() -> Iterator[bytes]:
                while True:
                    piece = source.read(_READ_CHUNK)
                    if not piece:
                        return
                    yield piece

            self._chunks = chunks()
        else:
            self._chunks = iter(source)
        self._buf = bytearray()
        self._eof = False
        self.line_no = 0
        self.max_buffered = 0

    def next_line(self) -> bytes | None:
        """Next complete line without its newline, or None at a clean EOF."""
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                self.line_no += 1
                return line
            if self._eof:
                if self._buf:
                    self.line_no += 1
                    raise ParseError("truncated record at end of stream", line=self.line_no)
                return None
            try:
                piece = next(self._chunks)
            except StopIteration:
                self._eof = True
                continue
            except OSError as exc:
                raise IoError(f"snapshot read failed: {exc}") from exc
            self._buf.extend(piece)
            if len(self._buf) > self.max_buffered:
                self.max_buffered = len(self._buf)
            if len(self._buf) > _MAX_RECORD_BYTES:
                raise ParseError("record exceeds the maximum supported size", line=self.line_no + 1)


def _parse_record(reader: _LineReader, expected_type: str) -> dict:
    line = reader.next_line()
    if line is None:
        raise ParseError(f"truncated snapshot: expected another {expected_type} record", line=reader.line_no + 1)
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise ParseError(f"invalid JSON: {exc}", line=reader.line_no) from None
    if not isinstance(obj, dict) or obj.get("type") != expected_type:
        raise ParseError(f"expected a {expected_type} record", line=reader.line_no)
    return obj


def _parse_header(reader: _LineReader) -> SnapshotHeader:
    obj = _parse_record(reader, "header")
    version = obj.get("formatVersion")
    if not isinstance(version, int):
        raise ParseError("header is missing an integer formatVersion", line=reader.line_no)
    if version != FORMAT_VERSION:
        raise VersionError(f"snapshot format version {version} is not supported (reader understands {FORMAT_VERSION})")
    try:
        header = SnapshotHeader(
            format_version=version,
            dimension=int(obj["dimension"]),
            metric=str(obj["metric"]),
            m=int(obj["m"]),
            m_max0=int(obj["mMax0"]),
            ef_construction=int(obj["efConstruction"]),
            m_l=float(obj["mL"]),
            seed=int(obj["seed"]),
            rng_cursor=int(obj["rngCursor"]),
            entry_point=obj["entryPoint"] if obj["entryPoint"] is None else str(obj["entryPoint"]),
            max_level=int(obj["maxLevel"]),
            node_count=int(obj["nodeCount"]),
            vectors_included=bool(obj["vectorsIncluded"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed header: {exc}", line=reader.line_no) from None
    if header.dimension < 1 or header.node_count < 0 or header.rng_cursor < 0:
        raise ParseError("header fields out of range", line=reader.line_no)
    return header


def read_header(source: ByteSource) -> SnapshotHeader:
    """Parse just the snapshot header (cheap way to learn dimension/config)."""
    return _parse_header(_LineReader(source))


def load_index(source: ByteSource, store: VectorStore | None) -> HnswGraph:
    """Reconstruct a graph from a snapshot stream, with bounded memory.

    When the snapshot includes vectors they are written to ``store`` in
    prefetch-sized batches as they stream in. All graph invariants are
    validated before the graph is returned.
    """
    reader = _LineReader(source)
    header = _parse_header(reader)
    try:
        metric = Metric(header.metric)
    except ValueError:
        raise ParseError(f"unknown metric {header.metric!r}", line=reader.line_no) from None
    try:
        config = HnswConfig(
            m=header.m,
            m_max0=header.m_max0,
            ef_construction=header.ef_construction,
            m_l=header.m_l,
            metric=metric,
            seed=header.seed,
        )
    except ValueError as exc:
        raise SnapshotCorruptionError(f"snapshot configuration is invalid: {exc}") from None
    if header.vectors_included and store is None:
        raise ValueError("snapshot includes vectors but no store was provided")
    if store is not None and store.dimension != header.dimension:
        raise StoreSchemaError(
            f"snapshot holds {header.dimension}-dimensional vectors, store expects {store.dimension}"
        )

    graph = HnswGraph(config, rng_cursor=header.rng_cursor)
    for _ in range(header.node_count):
        obj = _parse_record(reader, "node")
        try:
            key = obj["key"]
            level = obj["level"]
            neighbors = obj["neighbors"]
            if (
                not isinstance(key, str)
                or not key
                or not isinstance(level, int)
                or level < 0
                or not isinstance(neighbors, list)
                or not all(
                    isinstance(layer, list) and all(isinstance(nk, str) for nk in layer)
                    for layer in neighbors
                )
            ):
                raise ValueError("bad node fields")
        except (KeyError, ValueError):
            raise ParseError("malformed node record", line=reader.line_no) from None
        if key in graph.nodes:
            raise SnapshotCorruptionError(f"duplicate node key {key!r}")
        if len(neighbors) != level + 1:
            raise SnapshotCorruptionError(f"node {key!r} must carry layers 0..{level}")
        graph.nodes[key] = Node(key=key, level=level, neighbors=neighbors)

    if header.vectors_included:
        batch_size = default_p(header.dimension)
        pending: list[StoreRecord] = []
        seen: set[str] = set()
        for _ in range(header.node_count):
            obj = _parse_record(reader, "vector")
            key = obj.get("key")
            components = obj.get("components")
            if not isinstance(key, str) or not isinstance(components, list):
                raise ParseError("malformed vector record", line=reader.line_no)
            if key not in graph.nodes:
                raise SnapshotCorruptionError(f"vector record for unknown key {key!r}")
            if key in seen:
                raise SnapshotCorruptionError(f"duplicate vector record for key {key!r}")
            seen.add(key)
            if len(components) != header.dimension:
                raise SnapshotCorruptionError(
                    f"vector for {key!r} has dimension {len(components)}, header says {header.dimension}"
                )
            pending.append(StoreRecord(key, components))
            if len(pending) >= batch_size:
                store.put_batch(pending)
                pending = []
        if pending:
            store.put_batch(pending)

    trailing = reader.next_line()
    while trailing is not None:
        if trailing.strip():
            raise ParseError("unexpected content after the final record", line=reader.line_no)
        trailing = reader.next_line()

    graph.entry_point = header.entry_point
    graph.max_level = header.max_level
    try:
        graph.validate()
    except GraphCorruptionError as exc:
        raise SnapshotCorruptionError(str(exc)) from None
    graph.rebuild_in_refs()
    return graph
