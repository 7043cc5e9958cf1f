"""Command-line interface: corpus ingestion, index builds, queries, benchmarks,
snapshot export/import, the HTTP service, and fixture generation.

Exit codes: 0 success, 2 user/input error, 3 internal error. Every command is
deterministic for a fixed --seed (timing output excluded).
"""

from __future__ import annotations

import json
import os
import socket
import time

import click
import numpy as np

from .bench import run_bench
from .cache import CacheConfig
from .errors import ParseError, PocketAnnError
from .fixtures import iter_corpus_lines, synthetic_vectors, write_corpus
from .graph import HnswConfig
from .index import HnswIndex, create_index_dir, open_index_dir, save_index_dir
from .snapshot import export_index, load_index, read_header
from .store import InMemoryVectorStore, open_store
from .vectors import Metric

BUILD_CHUNK = 4096

_METRIC_CHOICES = [m.value for m in Metric]


class _Cli(click.Group):
    """Translates domain errors into the documented exit codes."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except (PocketAnnError, ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(2)
        except KeyboardInterrupt:
            raise
        except Exception as exc:
            click.echo(f"internal error: {exc!r}", err=True)
            ctx.exit(3)


@click.group(cls=_Cli, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="pocketann")
def main():
    """Embedded approximate nearest-neighbor search with disk-backed vectors."""


def _parse_corpus_line(line_no: int, line: str, dimension: int | None) -> tuple[str, list[float], str | None]:
    try:
        record = json.loads(line)
    except ValueError as exc:
        raise ParseError(f"invalid JSON: {exc}", line=line_no) from None
    if not isinstance(record, dict):
        raise ParseError("each line must be a JSON object", line=line_no)
    key = record.get("key")
    vector = record.get("vector")
    text = record.get("text")
    if not isinstance(key, str) or not key:
        raise ParseError("record needs a non-empty string 'key'", line=line_no)
    if (
        not isinstance(vector, list)
        or not vector
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector)
    ):
        raise ParseError("record needs a numeric array 'vector'", line=line_no)
    if dimension is not None and len(vector) != dimension:
        raise ParseError(f"vector has dimension {len(vector)}, expected {dimension}", line=line_no)
    if text is not None and not isinstance(text, str):
        raise ParseError("'text' must be a string when present", line=line_no)
    return key, vector, text


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--metric", type=click.Choice(_METRIC_CHOICES), default=Metric.COSINE.value, show_default=True)
@click.option("--m", type=int, default=16, show_default=True, help="Max neighbors per node on layers >= 1.")
@click.option("--mmax0", type=int, default=None, help="Max neighbors at layer 0 (default 2*M).")
@click.option("--ef-construction", type=int, default=200, show_default=True)
@click.option("--ml", type=float, default=None, help="Level multiplier (default 1/ln(M)).")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--p", type=int, default=None, help="Prefetch batch size (default derived from dimension).")
@click.option("--cache-capacity", type=int, default=None, help="Cached vector cap (default 8*p).")
@click.option("--chunk-size", type=int, default=BUILD_CHUNK, show_default=True, help="Records per store write.")
def build(input_path, out_dir, metric, m, mmax0, ef_construction, ml, seed, p, cache_capacity, chunk_size):
    """Build an index directory from a line-delimited JSON corpus."""
    config = HnswConfig(
        m=m, m_max0=mmax0, ef_construction=ef_construction, m_l=ml, metric=Metric(metric), seed=seed
    )
    started = time.perf_counter()
    index: HnswIndex | None = None
    keys: list[str] = []
    vectors: list[list[float]] = []
    texts: list[str | None] = []
    seen_keys: set[str] = set()

    def flush():
        index.bulk_insert(keys, vectors, payloads=texts)
        keys.clear()
        vectors.clear()
        texts.clear()

    for line_no, line in iter_corpus_lines(input_path):
        key, vector, text = _parse_corpus_line(line_no, line, index.dimension if index is not None else None)
        if key in seen_keys:
            raise ParseError(f"duplicate key {key!r}", line=line_no)
        seen_keys.add(key)
        if index is None:
            cache_config = CacheConfig.for_dimension(len(vector), p=p, capacity=cache_capacity)
            index = create_index_dir(out_dir, len(vector), config, cache_config)
        keys.append(key)
        vectors.append(vector)
        texts.append(text)
        if len(keys) >= chunk_size:
            flush()
    if index is None:
        raise ParseError("input contains no records", line=1)
    if keys:
        flush()
    save_index_dir(index)
    elapsed = time.perf_counter() - started

    click.echo(f"built {index.count} nodes in {elapsed:.2f}s at {out_dir}")
    click.echo("layer histogram: " + ", ".join(f"L{lvl}:{n}" for lvl, n in index.graph.level_histogram().items()))
    s = index.store.stats
    click.echo(
        f"store: count={s.count} dimension={s.dimension} "
        f"transactions_read={s.transactions_read} transactions_write={s.transactions_write}"
    )
    c = index.cache.stats
    click.echo(f"cache: hits={c.hits} misses={c.misses} prefetch_batches={c.prefetch_batches}")
    index.store.close()


def _load_query_vector(vector_json: str | None, vector_file: str | None) -> list[float]:
    if (vector_json is None) == (vector_file is None):
        raise click.UsageError("provide exactly one of --vector-json or --vector-file")
    raw = vector_json if vector_json is not None else open(vector_file, "r", encoding="utf-8").read()
    try:
        vector = json.loads(raw)
    except ValueError as exc:
        raise ParseError(f"query vector is not valid JSON: {exc}") from None
    if not isinstance(vector, list) or not all(isinstance(x, (int, float)) for x in vector):
        raise ParseError("query vector must be a JSON array of numbers")
    return vector


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--vector-json", default=None, help="Query vector as an inline JSON array.")
@click.option("--vector-file", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--ef", type=int, default=None, help="Candidate-list width (raised to k if smaller).")
def query(index_dir, vector_json, vector_file, k, ef):
    """Query an index directory; prints one JSON record per result."""
    vector = _load_query_vector(vector_json, vector_file)
    index = open_index_dir(index_dir)
    try:
        if ef is not None and ef < k:
            click.echo(f"warning: ef {ef} below k {k}; using ef={k}", err=True)
            ef = k
        result = index.query(vector, k, ef)
        texts = index.payloads_for(result.keys)
        for key, dist, text in zip(result.keys, result.distances, texts):
            click.echo(json.dumps({"key": key, "distance": dist, "text": text}, sort_keys=True))
    finally:
        index.store.close()


def _parse_int_list(raw: str, allow_default: bool = False) -> list:
    out = []
    for piece in raw.split(","):
        piece = piece.strip()
        if allow_default and piece == "default":
            out.append(None)
        elif piece:
            out.append(int(piece))
    if not out:
        raise click.UsageError(f"empty list: {raw!r}")
    return out


@main.command()
@click.option("--index", "index_dir", default=None, type=click.Path(exists=True, file_okay=False))
@click.option("--synthetic", default=None, metavar="N,DIM", help="Benchmark a synthetic in-memory index.")
@click.option("--queries", type=int, default=100, show_default=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--ef", "ef_list", default="100", show_default=True, help="Comma-separated ef values.")
@click.option("--p", "p_list", default="default", show_default=True, help="Comma-separated p values ('default' allowed).")
@click.option("--m", type=int, default=16, show_default=True, help="M for synthetic builds.")
@click.option("--ef-construction", type=int, default=200, show_default=True, help="For synthetic builds.")
@click.option("--metric", type=click.Choice(_METRIC_CHOICES), default=Metric.COSINE.value, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["table", "records"]), default="table", show_default=True)
def bench(index_dir, synthetic, queries, k, ef_list, p_list, m, ef_construction, metric, seed, fmt):
    """Measure query latency, recall vs a brute-force oracle, and read transactions."""
    if (index_dir is None) == (synthetic is None):
        raise click.UsageError("provide exactly one of --index or --synthetic")
    efs = _parse_int_list(ef_list)
    ps = _parse_int_list(p_list, allow_default=True)

    if synthetic is not None:
        try:
            n, dim = (int(x) for x in synthetic.split(","))
        except ValueError:
            raise click.UsageError("--synthetic expects N,DIM") from None
        data = synthetic_vectors(n, dim, seed)
        store = InMemoryVectorStore(dim)
        index = HnswIndex.create(
            store,
            HnswConfig(m=m, ef_construction=ef_construction, metric=Metric(metric), seed=seed),
        )
        width = len(str(max(n - 1, 0)))
        index.bulk_insert([f"doc-{i:0{width}d}" for i in range(n)], data)
    else:
        index = open_index_dir(index_dir)

    rng = np.random.default_rng(seed + 1)
    probe = rng.random((queries, index.dimension))
    rows = run_bench(index, probe, k, efs, ps)
    if fmt == "records":
        for row in rows:
            click.echo(json.dumps(row.as_record(), sort_keys=True))
    else:
        header = f"{'ef':>6} {'p':>6} {'queries':>8} {'mean_ms':>9} {'median_ms':>10} {'p99_ms':>9} {'recall':>7} {'tx_read':>8}"
        click.echo(header)
        for row in rows:
            click.echo(
                f"{row.ef:>6} {row.p:>6} {row.queries:>8} {row.mean_ms:>9.3f} "
                f"{row.median_ms:>10.3f} {row.p99_ms:>9.3f} {row.recall:>7.4f} {row.transactions_read:>8}"
            )
    index.store.close()


@main.command("export")
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--file", "file_path", required=True, type=click.Path(dir_okay=False))
@click.option("--include-vectors", is_flag=True, default=False, help="Inline vector records in the snapshot.")
def export_cmd(index_dir, file_path, include_vectors):
    """Export an index directory to a snapshot file."""
    index = open_index_dir(index_dir)
    try:
        with open(file_path, "wb") as sink:
            export_index(index.graph, index.store, include_vectors, sink)
    finally:
        index.store.close()
    click.echo(f"exported {index.count} nodes to {file_path} (vectors {'included' if include_vectors else 'omitted'})")


@main.command("import")
@click.option("--index", "index_dir", required=True, type=click.Path(file_okay=False))
@click.option("--file", "file_path", required=True, type=click.Path(exists=True, dir_okay=False))
def import_cmd(index_dir, file_path):
    """Import a snapshot into an index directory.

    A vectors-included snapshot creates a fresh directory. A topology-only
    snapshot needs the directory to already hold the matching vector store.
    """
    from .index import GRAPH_FILENAME, check_consistency

    with open(file_path, "rb") as fh:
        header = read_header(fh)
    snap_path = os.path.join(index_dir, GRAPH_FILENAME)
    store_path = os.path.join(index_dir, "store.db")
    if header.vectors_included:
        if os.path.exists(snap_path) or os.path.exists(store_path):
            raise click.UsageError(f"{index_dir} already holds an index; import into a fresh directory")
        os.makedirs(index_dir, exist_ok=True)
        store = open_store(index_dir, header.dimension)
        with open(file_path, "rb") as fh:
            graph = load_index(fh, store)
    else:
        if not os.path.exists(store_path):
            raise click.UsageError(
                f"snapshot has no vectors and {index_dir} has no store; export with --include-vectors instead"
            )
        store = open_store(index_dir, header.dimension)
        with open(file_path, "rb") as fh:
            graph = load_index(fh, store=None)
    index = HnswIndex(graph, store)
    consistent, only_in_store, only_in_graph = check_consistency(index)
    if not consistent:
        store.close()
        raise PocketAnnError(
            f"snapshot and store disagree: {len(only_in_store)} keys only in store, "
            f"{len(only_in_graph)} only in snapshot"
        )
    save_index_dir(index)
    store.close()
    click.echo(f"imported {index.count} nodes into {index_dir}")


@main.command("make-fixture")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--count", type=int, required=True)
@click.option("--dim", type=int, required=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--text/--no-text", "with_text", default=True, show_default=True)
@click.option("--embed-texts", is_flag=True, default=False, help="Derive vectors from the mock embedding of each text.")
def make_fixture(out_path, count, dim, seed, with_text, embed_texts):
    """Write a synthetic line-delimited corpus for tests and demos."""
    if embed_texts and not with_text:
        raise click.UsageError("--embed-texts requires texts")
    with open(out_path, "w", encoding="utf-8") as out:
        write_corpus(out, count, dim, seed=seed, with_text=with_text, embed_texts=embed_texts)
    click.echo(f"wrote {count} records of dimension {dim} to {out_path}")


def _require_free_port(host: str, port: int) -> None:
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise PocketAnnError(f"cannot listen on {host}:{port}: {exc}") from exc
    finally:
        probe.close()


@main.command()
@click.option("--data-dir", envvar="POCKETANN_DATA_DIR", required=True, type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True, envvar="POCKETANN_PORT")
@click.option("--embedding-url", default=None, envvar="POCKETANN_EMBEDDING_URL")
@click.option("--llm-url", default=None, envvar="POCKETANN_LLM_URL")
@click.option("--timeout-ms", type=int, default=30_000, show_default=True, envvar="POCKETANN_TIMEOUT_MS")
@click.option("--ui-dir", default=None, envvar="POCKETANN_UI_DIR", type=click.Path(file_okay=False))
def serve(data_dir, host, port, embedding_url, llm_url, timeout_ms, ui_dir):
    """Serve the HTTP API (and the playground UI when a bundle is available)."""
    import uvicorn

    from .service.app import ServiceSettings, create_app

    if ui_dir is None and os.path.isdir(os.path.join("frontend", "dist")):
        ui_dir = os.path.join("frontend", "dist")
    _require_free_port(host, port)
    app = create_app(
        ServiceSettings(
            data_dir=data_dir,
            embedding_url=embedding_url,
            llm_url=llm_url,
            timeout_ms=timeout_ms,
            ui_dir=ui_dir,
        )
    )
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command("mock-provider")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8901, show_default=True)
@click.option("--dim", type=int, default=64, show_default=True, help="Embedding dimension served.")
def mock_provider(host, port, dim):
    """Serve the deterministic mock embedding/LLM provider (for tests and demos)."""
    import uvicorn

    from .service.providers import create_mock_provider_app

    _require_free_port(host, port)
    uvicorn.run(create_mock_provider_app(dim), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
