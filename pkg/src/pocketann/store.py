"""Persistent key→vector storage with batched, transactional access.

The disk backend is a single SQLite file. Vectors are stored as fixed-width
little-endian float32 blobs (dimension × 4 bytes per record); raw document
text lives in a separate table under the same key. Every ``*_batch`` call is
one transaction, which is the property the prefetch cache builds on.

``InMemoryVectorStore`` implements the same contract without touching disk so
graph property tests stay fast.
"""

from __future__ import annotations

import os
import sqlite3
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, DuplicateKeyError, IoError, StoreSchemaError
from .vectors import STORAGE_DTYPE, as_stored_vector

__all__ = [
    "StoreRecord",
    "StoreStats",
    "BatchResult",
    "PayloadResult",
    "VectorStore",
    "SqliteVectorStore",
    "InMemoryVectorStore",
    "open_store",
]

STORE_FILENAME = "store.db"

# Stay under SQLite's default host-parameter limit when expanding IN (...).
_SQL_CHUNK = 500


@dataclass(frozen=True)
class StoreRecord:
    """One unit of storage: a key, its vector, and optional raw document text."""

    key: str
    vector: Sequence[float] | np.ndarray
    payload: str | None = None


@dataclass
class StoreStats:
    count: int
    dimension: int
    transactions_read: int
    transactions_write: int


@dataclass
class BatchResult:
    """Vectors for the requested keys in request order, plus the keys not found."""

    entries: list[tuple[str, np.ndarray]]
    missing: list[str] = field(default_factory=list)


@dataclass
class PayloadResult:
    """Payload texts in request order; a stored key without text maps to None."""

    entries: list[tuple[str, str | None]]
    missing: list[str] = field(default_factory=list)


class VectorStore(ABC):
    """Key→vector map with all-or-nothing batched writes and batched reads.

    One writer at a time; readers may run concurrently and observe either the
    pre- or post-state of a concurrent batch, never a partial one. The
    transaction counters increment once per ``*_batch`` call regardless of
    batch size.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise DimensionError(f"store dimension must be positive, got {dimension}")
        self.dimension = dimension
        self._tx_read = 0
        self._tx_write = 0
        self._lock = threading.RLock()

    # -- contract -----------------------------------------------------------

    @abstractmethod
    def put_batch(self, records: Sequence[StoreRecord]) -> None:
        """Durably write all records in one transaction, or none of them."""

    @abstractmethod
    def get_batch(self, keys: Sequence[str]) -> BatchResult:
        """Read vectors for ``keys`` in one transaction, preserving request order."""

    @abstractmethod
    def get_payloads(self, keys: Sequence[str]) -> PayloadResult:
        """Read payload texts for ``keys`` in one transaction."""

    @abstractmethod
    def delete_keys(self, keys: Sequence[str]) -> None:
        """Remove records in one transaction. Crash/cancel recovery plumbing only."""

    @abstractmethod
    def key_set(self) -> set[str]: ...

    @abstractmethod
    def __len__(self) -> int: ...

    def close(self) -> None:
        pass

    # -- shared helpers ------------------------------------------------------

    @property
    def stats(self) -> StoreStats:
        return StoreStats(
            count=len(self),
            dimension=self.dimension,
            transactions_read=self._tx_read,
            transactions_write=self._tx_write,
        )

    def _canonical_batch(self, records: Sequence[StoreRecord]) -> list[tuple[str, np.ndarray, str | None]]:
        seen: set[str] = set()
        out = []
        for rec in records:
            if not isinstance(rec.key, str) or not rec.key:
                raise ValueError("record keys must be non-empty strings")
            if rec.key in seen:
                raise DuplicateKeyError(f"duplicate key within batch: {rec.key!r}")
            seen.add(rec.key)
            out.append((rec.key, as_stored_vector(rec.vector, self.dimension), rec.payload))
        return out

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class SqliteVectorStore(VectorStore):
    """SQLite-backed store; survives process restarts, atomic per batch."""

    def __init__(self, path: str | os.PathLike, dimension: int):
        super().__init__(dimension)
        self.path = os.fspath(path)
        parent = os.path.dirname(os.path.abspath(self.path))
        try:
            os.makedirs(parent, exist_ok=True)
            self._db = sqlite3.connect(self.path, check_same_thread=False, isolation_level=None)
        except (OSError, sqlite3.Error) as exc:
            raise IoError(f"cannot open store at {self.path}: {exc}") from exc
        try:
            self._db.execute("PRAGMA journal_mode=WAL")
            self._db.execute("PRAGMA synchronous=NORMAL")
            self._init_schema()
        except sqlite3.Error as exc:
            self._db.close()
            raise IoError(f"cannot initialize store at {self.path}: {exc}") from exc
        except BaseException:
            self._db.close()
            raise

    def _init_schema(self) -> None:
        with self._lock:
            self._db.execute("BEGIN IMMEDIATE")
            try:
                self._db.execute("CREATE TABLE IF NOT EXISTS meta (k TEXT PRIMARY KEY, v TEXT NOT NULL)")
                self._db.execute("CREATE TABLE IF NOT EXISTS vectors (key TEXT PRIMARY KEY, vec BLOB NOT NULL)")
                self._db.execute("CREATE TABLE IF NOT EXISTS payloads (key TEXT PRIMARY KEY, txt TEXT NOT NULL)")
                row = self._db.execute("SELECT v FROM meta WHERE k = 'dimension'").fetchone()
                if row is None:
                    self._db.execute("INSERT INTO meta (k, v) VALUES ('dimension', ?)", (str(self.dimension),))
                elif int(row[0]) != self.dimension:
                    raise StoreSchemaError(
                        f"store at {self.path} holds {row[0]}-dimensional vectors, requested {self.dimension}"
                    )
                self._db.execute("COMMIT")
            except BaseException:
                self._db.execute("ROLLBACK")
                raise

    def put_batch(self, records: Sequence[StoreRecord]) -> None:
        batch = self._canonical_batch(records)
        with self._lock:
            self._tx_write += 1
            try:
                self._db.execute("BEGIN IMMEDIATE")
            except sqlite3.Error as exc:
                raise IoError(f"store write failed: {exc}") from exc
            try:
                self._db.executemany(
                    "INSERT INTO vectors (key, vec) VALUES (?, ?)",
                    ((key, vec.tobytes()) for key, vec, _ in batch),
                )
                self._db.executemany(
                    "INSERT INTO payloads (key, txt) VALUES (?, ?)",
                    ((key, payload) for key, _, payload in batch if payload is not None),
                )
                self._db.execute("COMMIT")
            except sqlite3.IntegrityError as exc:
                self._db.execute("ROLLBACK")
                offender = self._first_existing(key for key, _, _ in batch)
                raise DuplicateKeyError(f"key already stored: {offender!r}") from exc
            except BaseException:
                self._db.execute("ROLLBACK")
                raise

    def _first_existing(self, keys: Iterable[str]) -> str | None:
        for chunk in _chunks(list(keys), _SQL_CHUNK):
            marks = ",".join("?" * len(chunk))
            row = self._db.execute(f"SELECT key FROM vectors WHERE key IN ({marks}) LIMIT 1", chunk).fetchone()
            if row:
                return row[0]
        return None

    def get_batch(self, keys: Sequence[str]) -> BatchResult:
        with self._lock:
            self._tx_read += 1
            found: dict[str, bytes] = {}
            try:
                self._db.execute("BEGIN")
                for chunk in _chunks(list(dict.fromkeys(keys)), _SQL_CHUNK):
                    marks = ",".join("?" * len(chunk))
                    for key, blob in self._db.execute(f"SELECT key, vec FROM vectors WHERE key IN ({marks})", chunk):
                        found[key] = blob
                self._db.execute("COMMIT")
            except sqlite3.Error as exc:
                self._db.execute("ROLLBACK")
                raise IoError(f"store read failed: {exc}") from exc
        entries, missing = [], []
        for key in keys:
            blob = found.get(key)
            if blob is None:
                missing.append(key)
            else:
                entries.append((key, np.frombuffer(blob, dtype=STORAGE_DTYPE).copy()))
        return BatchResult(entries=entries, missing=missing)

    def get_payloads(self, keys: Sequence[str]) -> PayloadResult:
        with self._lock:
            self._tx_read += 1
            present: set[str] = set()
            texts: dict[str, str] = {}
            try:
                self._db.execute("BEGIN")
                for chunk in _chunks(list(dict.fromkeys(keys)), _SQL_CHUNK):
                    marks = ",".join("?" * len(chunk))
                    for (key,) in self._db.execute(f"SELECT key FROM vectors WHERE key IN ({marks})", chunk):
                        present.add(key)
                    for key, txt in self._db.execute(f"SELECT key, txt FROM payloads WHERE key IN ({marks})", chunk):
                        texts[key] = txt
                self._db.execute("COMMIT")
            except sqlite3.Error as exc:
                self._db.execute("ROLLBACK")
                raise IoError(f"store read failed: {exc}") from exc
        entries, missing = [], []
        for key in keys:
            if key in present:
                entries.append((key, texts.get(key)))
            else:
                missing.append(key)
        return PayloadResult(entries=entries, missing=missing)

    def delete_keys(self, keys: Sequence[str]) -> None:
        with self._lock:
            self._tx_write += 1
            try:
                self._db.execute("BEGIN IMMEDIATE")
                for chunk in _chunks(list(keys), _SQL_CHUNK):
                    marks = ",".join("?" * len(chunk))
                    self._db.execute(f"DELETE FROM vectors WHERE key IN ({marks})", chunk)
                    self._db.execute(f"DELETE FROM payloads WHERE key IN ({marks})", chunk)
                self._db.execute("COMMIT")
            except sqlite3.Error as exc:
                self._db.execute("ROLLBACK")
                raise IoError(f"store delete failed: {exc}") from exc

    def key_set(self) -> set[str]:
        with self._lock:
            return {row[0] for row in self._db.execute("SELECT key FROM vectors")}

    def __len__(self) -> int:
        with self._lock:
            return int(self._db.execute("SELECT COUNT(*) FROM vectors").fetchone()[0])

    def close(self) -> None:
        with self._lock:
            self._db.close()


class InMemoryVectorStore(VectorStore):
    """Dict-backed store with identical semantics; for tests and benchmarks."""

    def __init__(self, dimension: int):
        super().__init__(dimension)
        self._vectors: dict[str, np.ndarray] = {}
        self._payloads: dict[str, str] = {}

    def put_batch(self, records: Sequence[StoreRecord]) -> None:
        batch = self._canonical_batch(records)
        with self._lock:
            self._tx_write += 1
            for key, _, _ in batch:
                if key in self._vectors:
                    raise DuplicateKeyError(f"key already stored: {key!r}")
            for key, vec, payload in batch:
                self._vectors[key] = vec
                if payload is not None:
                    self._payloads[key] = payload

    def get_batch(self, keys: Sequence[str]) -> BatchResult:
        with self._lock:
            self._tx_read += 1
            entries, missing = [], []
            for key in keys:
                vec = self._vectors.get(key)
                if vec is None:
                    missing.append(key)
                else:
                    entries.append((key, vec.copy()))
            return BatchResult(entries=entries, missing=missing)

    def get_payloads(self, keys: Sequence[str]) -> PayloadResult:
        with self._lock:
            self._tx_read += 1
            entries, missing = [], []
            for key in keys:
                if key in self._vectors:
                    entries.append((key, self._payloads.get(key)))
                else:
                    missing.append(key)
            return PayloadResult(entries=entries, missing=missing)

    def delete_keys(self, keys: Sequence[str]) -> None:
        with self._lock:
            self._tx_write += 1
            for key in keys:
                self._vectors.pop(key, None)
                self._payloads.pop(key, None)

    def key_set(self) -> set[str]:
        with self._lock:
            return set(self._vectors)

    def __len__(self) -> int:
        return len(self._vectors)


def open_store(path: str | os.PathLike, dimension: int) -> SqliteVectorStore:
    """Open (creating if absent) the disk store at ``path``.

    ``path`` may be a store file or a directory, in which case the store file
    is placed inside it under the conventional name.
    """
    p = os.fspath(path)
    if os.path.isdir(p) or not os.path.splitext(p)[1]:
        p = os.path.join(p, STORE_FILENAME)
    return SqliteVectorStore(p, dimension)


def _chunks(items: list, size: int):
    for i in range(0, len(items), size):
        yield items[i : i + size]
