"""HTTP service exposing collections, retrieval, prompt assembly, and snapshots.

Endpoint paths and body schemas are documented in API.md. Embedding and
completion are delegated to external HTTP endpoints configured at startup;
neither model runs in-process.
"""

from __future__ import annotations

import os
import re
import tempfile
from contextlib import asynccontextmanager
from dataclasses import dataclass

import httpx
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, RedirectResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from starlette.concurrency import run_in_threadpool

from ..errors import (
    DegenerateVectorError,
    DimensionError,
    DuplicateKeyError,
    EmptyIndexError,
    ParseError,
    PocketAnnError,
    SnapshotCorruptionError,
    VersionError,
)
from ..prompting import assemble_prompt
from .collections import (
    Collection,
    CollectionBusyError,
    CollectionExistsError,
    CollectionManager,
    CollectionNotFoundError,
    ImportRequiresVectorsError,
    collection_consistency,
    export_chunks,
)
from .providers import (
    CompletionUnavailableError,
    EmbeddingNotConfiguredError,
    EmbeddingUnavailableError,
    EndpointConfig,
    ProviderClient,
)
from .schemas import (
    AddDocumentsRequest,
    AddDocumentsResponse,
    BuildStatus,
    CollectionDescriptor,
    ConsistencyReport,
    CreateCollectionRequest,
    ErrorBody,
    ErrorDetail,
    HealthResponse,
    PromptRequest,
    PromptResponse,
    QueryRequest,
    QueryResponse,
    ServiceConfigResponse,
)


@dataclass(frozen=True)
class ServiceSettings:
    data_dir: str
    embedding_url: str | None = None
    llm_url: str | None = None
    timeout_ms: int = 30_000
    ui_dir: str | None = None


def _error(status: int, code: str, message: str, line: int | None = None) -> JSONResponse:
    body = ErrorBody(error=ErrorDetail(code=code, message=message, line=line))
    return JSONResponse(status_code=status, content=body.model_dump())


_ERROR_MAP: list[tuple[type, int, str]] = [
    (CollectionNotFoundError, 404, "not-found"),
    (CollectionExistsError, 409, "conflict"),
    (CollectionBusyError, 409, "busy"),
    (DuplicateKeyError, 409, "duplicate-key"),
    (EmptyIndexError, 409, "empty-collection"),
    (EmbeddingNotConfiguredError, 409, "embedding-not-configured"),
    (EmbeddingUnavailableError, 502, "embedding-unavailable"),
    (DimensionError, 400, "dimension-mismatch"),
    (DegenerateVectorError, 400, "invalid-vector"),
    (ImportRequiresVectorsError, 400, "import-requires-vectors"),
    (VersionError, 400, "unsupported-version"),
    (SnapshotCorruptionError, 400, "corrupt-snapshot"),
]


def create_app(settings: ServiceSettings, provider_transport: httpx.BaseTransport | None = None) -> FastAPI:
    manager = CollectionManager(settings.data_dir)
    provider = ProviderClient(
        EndpointConfig(
            embedding_url=settings.embedding_url,
            llm_url=settings.llm_url,
            timeout_ms=settings.timeout_ms,
        ),
        transport=provider_transport,
    )

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        manager.shutdown()
        provider.close()

    app = FastAPI(title="pocketann", version="0.1.0", lifespan=lifespan)
    app.state.manager = manager
    app.state.provider = provider

    @app.exception_handler(ParseError)
    async def handle_parse_error(_: Request, exc: ParseError):
        return _error(400, "parse-error", str(exc), line=exc.line)

    @app.exception_handler(PocketAnnError)
    async def handle_domain_error(_: Request, exc: PocketAnnError):
        for cls, status, code in _ERROR_MAP:
            if isinstance(exc, cls):
                return _error(status, code, str(exc))
        return _error(500, "internal", str(exc))

    # -- service ----------------------------------------------------------------

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", collections=len(manager.names()))

    @app.get("/config", response_model=ServiceConfigResponse)
    def config():
        return ServiceConfigResponse(
            data_dir=manager.data_dir,
            embedding_configured=provider.has_embedding,
            llm_configured=provider.has_llm,
            timeout_ms=provider.config.timeout_ms,
        )

    # -- collections --------------------------------------------------------------

    def _descriptor(collection: Collection) -> CollectionDescriptor:
        return CollectionDescriptor(**collection.descriptor())

    @app.get("/collections", response_model=list[CollectionDescriptor])
    def list_collections():
        return [_descriptor(manager.get(name)) for name in manager.names()]

    @app.post("/collections", response_model=CollectionDescriptor, status_code=201)
    def create_collection(req: CreateCollectionRequest):
        try:
            collection = manager.create(
                name=req.name,
                dimension=req.dimension,
                metric=req.metric,
                m=req.m,
                m_max0=req.m_max0,
                ef_construction=req.ef_construction,
                m_l=req.m_l,
                seed=req.seed,
                p=req.p,
                cache_capacity=req.cache_capacity,
            )
        except ValueError as exc:
            return _error(400, "invalid-params", str(exc))
        return _descriptor(collection)

    @app.get("/collections/{name}", response_model=CollectionDescriptor)
    def get_collection(name: str):
        return _descriptor(manager.get(name))

    # -- documents ----------------------------------------------------------------

    @app.post("/collections/{name}/documents")
    def add_documents(name: str, req: AddDocumentsRequest):
        collection = manager.get(name)
        keys = [item.key for item in req.items]
        vectors = [item.vector for item in req.items]
        texts = [item.text for item in req.items]
        added = collection.add_documents(keys, vectors, texts, wait=req.wait)
        if added is None:
            return JSONResponse(status_code=202, content=_status(collection).model_dump())
        return AddDocumentsResponse(added=added).model_dump()

    def _status(collection: Collection) -> BuildStatus:
        build = collection.build
        return BuildStatus(
            state=build.state,
            progress=build.progress,
            inserted=build.inserted,
            total=build.total,
            error=build.error,
        )

    @app.get("/collections/{name}/build", response_model=BuildStatus)
    def build_status(name: str):
        return _status(manager.get(name))

    # -- retrieval ------------------------------------------------------------------

    def _resolve_query_vector(req_vector: list[float] | None, req_text: str | None) -> list[float]:
        if (req_vector is None) == (req_text is None):
            raise DimensionError("exactly one of 'vector' or 'text' must be provided")
        if req_vector is not None:
            return req_vector
        return provider.embed(req_text)

    def _run_query(collection: Collection, vector: list[float], k: int, ef: int | None) -> QueryResponse:
        with collection.read_gate():
            result = collection.index.query(vector, k, ef)
            texts = collection.index.payloads_for(result.keys)
        return QueryResponse(keys=result.keys, distances=result.distances, texts=texts)

    @app.post("/collections/{name}/query", response_model=QueryResponse)
    def query_collection(name: str, req: QueryRequest):
        collection = manager.get(name)
        vector = _resolve_query_vector(req.vector, req.text)
        return _run_query(collection, vector, req.k, req.ef)

    @app.post("/collections/{name}/prompt", response_model=PromptResponse)
    def run_prompt(name: str, req: PromptRequest):
        collection = manager.get(name)
        vector = provider.embed(req.user_query)
        retrieved = _run_query(collection, vector, req.k, req.ef)
        prompt = assemble_prompt(req.template, req.user_query, [t or "" for t in retrieved.texts])
        completion = None
        warning = None
        if req.complete and provider.has_llm:
            try:
                completion = provider.complete(prompt)
            except CompletionUnavailableError as exc:
                warning = str(exc)
        return PromptResponse(retrieved=retrieved, prompt=prompt, completion=completion, warning=warning)

    # -- snapshots --------------------------------------------------------------------

    @app.get("/collections/{name}/export")
    def export_collection(name: str, include_vectors: bool = Query(default=True)):
        collection = manager.get(name)
        if not collection.gate.try_read():
            raise CollectionBusyError(f"collection {name!r} has a build in progress")

        def stream():
            try:
                yield from export_chunks(collection, include_vectors)
            finally:
                collection.gate.done_read()

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    @app.post("/collections/{name}/import", response_model=CollectionDescriptor, status_code=201)
    async def import_collection(name: str, request: Request):
        if not _NAME_OK.match(name):
            return _error(400, "invalid-params", "collection names must be URL-safe")
        with tempfile.TemporaryFile() as spool:
            async for chunk in request.stream():
                spool.write(chunk)
            spool.seek(0)
            # the loader is synchronous; keep it off the event loop
            collection = await run_in_threadpool(manager.import_snapshot, name, spool)
        return _descriptor(collection)

    # -- admin -------------------------------------------------------------------------

    @app.get("/collections/{name}/consistency", response_model=ConsistencyReport)
    def consistency(name: str):
        return ConsistencyReport(**collection_consistency(manager.get(name)))

    if settings.ui_dir and os.path.isdir(settings.ui_dir):
        app.mount("/ui", StaticFiles(directory=settings.ui_dir, html=True), name="ui")

        @app.get("/", include_in_schema=False)
        def root():
            return RedirectResponse(url="/ui/")

    return app


_NAME_OK = re.compile(r"^[A-Za-z0-9._~-]{1,64}$")
