"""Named collections (store + graph + cache) persisted under a data directory.

Each collection lives in ``<data_dir>/<name>/`` as ``store.db`` plus
``graph.snapshot`` plus a small ``collection.json`` with cache settings.
Builds run one at a time per collection and exclude queries while active;
a build interrupted by shutdown rolls its unlinked records back out of the
store, and a build killed hard is reconciled away on the next startup, so
a collection never serves a graph that disagrees with its store.
"""

from __future__ import annotations

import json
import os
import shutil
import threading
from dataclasses import dataclass

from ..cache import CacheConfig
from ..errors import PocketAnnError, SnapshotCorruptionError
from ..graph import HnswConfig
from ..index import HnswIndex, check_consistency, create_index_dir, open_index_dir, save_index_dir
from ..snapshot import load_index, read_header
from ..store import open_store
from ..vectors import Metric

META_FILENAME = "collection.json"
EXPORT_CHUNK = 1 << 16


class CollectionNotFoundError(PocketAnnError):
    pass


class CollectionExistsError(PocketAnnError):
    pass


class CollectionBusyError(PocketAnnError):
    """A build is running; retrieval and further mutation are rejected until it ends."""


class ImportRequiresVectorsError(PocketAnnError):
    """Service imports must carry vectors; topology-only snapshots need an existing store (CLI)."""


@dataclass
class BuildState:
    state: str = "idle"  # idle | running | done | cancelled | failed
    inserted: int = 0
    total: int = 0
    error: str | None = None

    @property
    def progress(self) -> float:
        if self.total <= 0:
            return 1.0 if self.state in ("done", "idle") else 0.0
        return self.inserted / self.total


class _Gate:
    """Readers share; one writer excludes readers and other writers.

    Acquiring is non-blocking by design: a busy collection answers 409
    instead of queueing work behind a long build.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def try_read(self) -> bool:
        with self._cond:
            if self._writer:
                return False
            self._readers += 1
            return True

    def done_read(self) -> None:
        with self._cond:
            self._readers -= 1
            self._cond.notify_all()

    def try_write(self) -> bool:
        with self._cond:
            if self._writer:
                return False
            self._writer = True
            while self._readers > 0:  # queries are short; drain them
                self._cond.wait()
            return True

    def done_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class Collection:
    def __init__(self, name: str, path: str, index: HnswIndex):
        self.name = name
        self.path = path
        self.index = index
        self.gate = _Gate()
        self.build = BuildState()
        self._build_thread: threading.Thread | None = None
        self._cancel = threading.Event()

    # -- descriptors -----------------------------------------------------------

    def descriptor(self) -> dict:
        cfg = self.index.config
        cache_cfg = self.index.cache.config
        return {
            "name": self.name,
            "dimension": self.index.dimension,
            "metric": cfg.metric,
            "m": cfg.m,
            "m_max0": cfg.m_max0,
            "ef_construction": cfg.ef_construction,
            "m_l": cfg.m_l,
            "seed": cfg.seed,
            "p": cache_cfg.p,
            "cache_capacity": cache_cfg.capacity,
            "count": self.index.count,
        }

    # -- writes ----------------------------------------------------------------

    def add_documents(self, keys: list[str], vectors: list, texts: list[str | None], wait: bool) -> int | None:
        """One batched store write plus graph linking; background when ``wait`` is false.

        Returns the number added for synchronous calls, None when a
        background build was started (poll the build status).
        """
        if not self.gate.try_write():
            raise CollectionBusyError(f"collection {self.name!r} has a build in progress")
        self._cancel.clear()
        self.build = BuildState(state="running", total=len(keys))
        if wait:
            try:
                self._run_build(keys, vectors, texts, reraise=True)
            finally:
                self.gate.done_write()
            return self.build.inserted
        thread = threading.Thread(
            target=self._run_build_locked, args=(keys, vectors, texts), daemon=True
        )
        self._build_thread = thread
        thread.start()
        return None

    def _run_build_locked(self, keys, vectors, texts) -> None:
        try:
            self._run_build(keys, vectors, texts)
        finally:
            self.gate.done_write()

    def _run_build(self, keys, vectors, texts, reraise: bool = False) -> None:
        status = self.build
        failure: Exception | None = None

        def on_progress(done: int, total: int) -> None:
            status.inserted = done

        try:
            inserted = self.index.bulk_insert(
                keys,
                vectors,
                payloads=texts,
                progress=on_progress,
                should_abort=self._cancel.is_set,
            )
            status.inserted = inserted
            status.state = "cancelled" if self._cancel.is_set() and inserted < len(keys) else "done"
        except Exception as exc:  # surfaced via status; re-raised for synchronous callers
            failure = exc
            status.state = "failed"
            status.error = str(exc) or repr(exc)
            self._reconcile_after_failure()
        finally:
            try:
                save_index_dir(self.index)
            except PocketAnnError as exc:
                status.state = "failed"
                status.error = status.error or f"snapshot write failed: {exc}"
                failure = failure or exc
        if failure is not None and reraise:
            raise failure

    def _reconcile_after_failure(self) -> None:
        consistent, only_in_store, _ = check_consistency(self.index)
        if not consistent and only_in_store:
            self.index.store.delete_keys(sorted(only_in_store))

    def cancel_build(self, join_timeout: float = 30.0) -> None:
        self._cancel.set()
        thread = self._build_thread
        if thread is not None and thread.is_alive():
            thread.join(timeout=join_timeout)

    # -- reads -----------------------------------------------------------------

    def read_gate(self):
        """Context manager rejecting reads while a build runs."""
        return _ReadGuard(self)


class _ReadGuard:
    def __init__(self, collection: Collection):
        self._collection = collection

    def __enter__(self):
        if not self._collection.gate.try_read():
            raise CollectionBusyError(f"collection {self._collection.name!r} has a build in progress")
        return self._collection

    def __exit__(self, *exc):
        self._collection.gate.done_read()
        return False


class CollectionManager:
    """Creates, recovers, and serves collections under one data directory."""

    def __init__(self, data_dir: str | os.PathLike):
        self.data_dir = os.fspath(data_dir)
        os.makedirs(self.data_dir, exist_ok=True)
        self._collections: dict[str, Collection] = {}
        self._lock = threading.RLock()
        self._recover()

    def _recover(self) -> None:
        for entry in sorted(os.listdir(self.data_dir)):
            path = os.path.join(self.data_dir, entry)
            meta_path = os.path.join(path, META_FILENAME)
            if not os.path.isfile(meta_path):
                continue
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
            cache_config = CacheConfig(p=meta["p"], capacity=meta["cache_capacity"])
            # reconcile=True drops store records an interrupted build never linked
            index = open_index_dir(path, cache_config, reconcile=True)
            self._collections[entry] = Collection(entry, path, index)

    # -- lifecycle --------------------------------------------------------------

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._collections)

    def get(self, name: str) -> Collection:
        with self._lock:
            try:
                return self._collections[name]
            except KeyError:
                raise CollectionNotFoundError(f"no collection named {name!r}") from None

    def create(
        self,
        name: str,
        dimension: int,
        metric: Metric = Metric.COSINE,
        m: int = 16,
        m_max0: int | None = None,
        ef_construction: int = 200,
        m_l: float | None = None,
        seed: int = 42,
        p: int | None = None,
        cache_capacity: int | None = None,
    ) -> Collection:
        with self._lock:
            if name in self._collections:
                raise CollectionExistsError(f"collection {name!r} already exists")
            path = os.path.join(self.data_dir, name)
            if os.path.exists(path):
                raise CollectionExistsError(f"collection directory {name!r} already exists on disk")
            config = HnswConfig(
                m=m, m_max0=m_max0, ef_construction=ef_construction, m_l=m_l, metric=metric, seed=seed
            )
            cache_config = CacheConfig.for_dimension(dimension, p=p, capacity=cache_capacity)
            index = create_index_dir(path, dimension, config, cache_config)
            save_index_dir(index)
            self._write_meta(path, cache_config)
            collection = Collection(name, path, index)
            self._collections[name] = collection
            return collection

    def import_snapshot(self, name: str, source) -> Collection:
        """Create a collection from a vectors-included snapshot stream."""
        with self._lock:
            if name in self._collections:
                raise CollectionExistsError(f"collection {name!r} already exists")
            path = os.path.join(self.data_dir, name)
            if os.path.exists(path):
                raise CollectionExistsError(f"collection directory {name!r} already exists on disk")
        header = read_header(source)
        if not header.vectors_included:
            raise ImportRequiresVectorsError(
                "snapshot has no vector records; import it with the CLI against an existing store"
            )
        source.seek(0)
        os.makedirs(path)
        try:
            store = open_store(path, header.dimension)
            graph = load_index(source, store)
            if graph.key_set() != store.key_set():
                raise SnapshotCorruptionError("imported snapshot and store disagree on keys")
            cache_config = CacheConfig.for_dimension(header.dimension)
            index = HnswIndex(graph, store, cache_config)
            save_index_dir(index)
            self._write_meta(path, cache_config)
        except BaseException:
            shutil.rmtree(path, ignore_errors=True)
            raise
        collection = Collection(name, path, index)
        with self._lock:
            self._collections[name] = collection
        return collection

    def shutdown(self) -> None:
        with self._lock:
            collections = list(self._collections.values())
        for collection in collections:
            collection.cancel_build()
            collection.index.store.close()

    @staticmethod
    def _write_meta(path: str, cache_config: CacheConfig) -> None:
        meta = {"p": cache_config.p, "cache_capacity": cache_config.capacity}
        with open(os.path.join(path, META_FILENAME), "w", encoding="utf-8") as fh:
            json.dump(meta, fh)
            fh.write("\n")


def export_chunks(collection: Collection, include_vectors: bool):
    """Yield snapshot bytes for streaming; spools to a temp file first."""
    import tempfile

    from ..snapshot import export_index

    with tempfile.TemporaryFile() as spool:
        export_index(collection.index.graph, collection.index.store, include_vectors, spool)
        spool.seek(0)
        while True:
            chunk = spool.read(EXPORT_CHUNK)
            if not chunk:
                return
            yield chunk


def collection_consistency(collection: Collection) -> dict:
    consistent, only_in_store, only_in_graph = check_consistency(collection.index)
    return {
        "consistent": consistent,
        "store_count": len(collection.index.store),
        "graph_count": collection.index.count,
        "only_in_store": sorted(only_in_store)[:20],
        "only_in_graph": sorted(only_in_graph)[:20],
    }
