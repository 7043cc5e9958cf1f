"""Request/response models for the HTTP API (schemas documented in API.md)."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..vectors import Metric


class CreateCollectionRequest(BaseModel):
    name: str = Field(pattern=r"^[A-Za-z0-9._~-]{1,64}$")
    dimension: int = Field(ge=1)
    metric: Metric = Metric.COSINE
    m: int = 16
    m_max0: int | None = None
    ef_construction: int = 200
    m_l: float | None = None
    seed: int = 42
    p: int | None = None
    cache_capacity: int | None = None


class CollectionDescriptor(BaseModel):
    name: str
    dimension: int
    metric: Metric
    m: int
    m_max0: int
    ef_construction: int
    m_l: float
    seed: int
    p: int
    cache_capacity: int
    count: int


class DocumentIn(BaseModel):
    key: str = Field(min_length=1)
    vector: list[float]
    text: str | None = None


class AddDocumentsRequest(BaseModel):
    items: list[DocumentIn]
    # wait=False runs the build in the background; poll GET .../build for progress
    wait: bool = True


class AddDocumentsResponse(BaseModel):
    added: int


class BuildStatus(BaseModel):
    state: str  # idle | running | done | cancelled | failed
    progress: float
    inserted: int
    total: int
    error: str | None = None


class QueryRequest(BaseModel):
    vector: list[float] | None = None
    text: str | None = None
    k: int = Field(default=10, ge=1)
    ef: int | None = Field(default=None, ge=1)


class QueryResponse(BaseModel):
    keys: list[str]
    distances: list[float]
    texts: list[str | None]


class PromptRequest(BaseModel):
    template: str
    user_query: str
    k: int = Field(default=10, ge=1)
    ef: int | None = Field(default=None, ge=1)
    # opt out of the completion call even when an LLM endpoint is configured
    # (the playground's "no model" choice)
    complete: bool = True


class PromptResponse(BaseModel):
    retrieved: QueryResponse
    prompt: str
    completion: str | None = None
    warning: str | None = None


class ConsistencyReport(BaseModel):
    consistent: bool
    store_count: int
    graph_count: int
    only_in_store: list[str]
    only_in_graph: list[str]


class ServiceConfigResponse(BaseModel):
    data_dir: str
    embedding_configured: bool
    llm_configured: bool
    timeout_ms: int


class HealthResponse(BaseModel):
    status: str
    collections: int


class ErrorDetail(BaseModel):
    code: str
    message: str
    line: int | None = None


class ErrorBody(BaseModel):
    error: ErrorDetail
