"""Pluggable embedding and completion endpoints.

Both providers are plain HTTP+JSON services with a minimal contract
(documented in API.md):

    POST {embedding_url}   {"text": "..."}    -> {"vector": [floats]}
    POST {llm_url}         {"prompt": "..."}  -> {"completion": "..."}

A deterministic in-process mock provider implementing both endpoints ships
for tests and demos (``pocketann mock-provider``).
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx
from pydantic import BaseModel

from ..errors import PocketAnnError
from ..fixtures import mock_embedding


class EmbeddingNotConfiguredError(PocketAnnError):
    """A text query arrived but no embedding endpoint is configured."""


class EmbeddingUnavailableError(PocketAnnError):
    """The embedding endpoint is unreachable or answered garbage."""


class CompletionUnavailableError(PocketAnnError):
    """The LLM endpoint is unreachable or answered garbage."""


@dataclass(frozen=True)
class EndpointConfig:
    embedding_url: str | None = None
    llm_url: str | None = None
    timeout_ms: int = 30_000

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError(f"timeout_ms must be positive, got {self.timeout_ms}")


class ProviderClient:
    """HTTP client for the configured external endpoints."""

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout_ms / 1000.0, transport=transport)

    @property
    def has_embedding(self) -> bool:
        return self.config.embedding_url is not None

    @property
    def has_llm(self) -> bool:
        return self.config.llm_url is not None

    def embed(self, text: str) -> list[float]:
        if not self.has_embedding:
            raise EmbeddingNotConfiguredError("no embedding endpoint is configured")
        try:
            response = self._client.post(self.config.embedding_url, json={"text": text})
            response.raise_for_status()
            vector = response.json()["vector"]
            if not isinstance(vector, list) or not all(isinstance(x, (int, float)) for x in vector):
                raise ValueError("embedding response must carry a numeric 'vector' array")
            return [float(x) for x in vector]
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise EmbeddingUnavailableError(f"embedding endpoint failed: {exc}") from exc

    def complete(self, prompt: str) -> str:
        if not self.has_llm:
            raise CompletionUnavailableError("no LLM endpoint is configured")
        try:
            response = self._client.post(self.config.llm_url, json={"prompt": prompt})
            response.raise_for_status()
            completion = response.json()["completion"]
            if not isinstance(completion, str):
                raise ValueError("completion response must carry a 'completion' string")
            return completion
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise CompletionUnavailableError(f"LLM endpoint failed: {exc}") from exc

    def close(self) -> None:
        self._client.close()


class MockEmbedRequest(BaseModel):
    text: str


class MockCompleteRequest(BaseModel):
    prompt: str


def create_mock_provider_app(dimension: int = 64):
    """FastAPI app serving deterministic /embed and /complete endpoints.

    /embed hashes the text into a reproducible unit vector; /complete echoes
    the prompt back, so tests can assert exact pass-through.
    """
    from fastapi import FastAPI

    app = FastAPI(title="pocketann mock provider")

    @app.post("/embed")
    def embed(req: MockEmbedRequest):
        return {"vector": mock_embedding(req.text, dimension)}

    @app.post("/complete")
    def complete(req: MockCompleteRequest):
        return {"completion": req.prompt}

    return app
