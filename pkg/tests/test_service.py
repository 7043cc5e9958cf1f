import json
import time

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

from pocketann.fixtures import mock_embedding
from pocketann.service.app import ServiceSettings, create_app

DIM = 8


def make_provider_transport(dim=DIM, embed_status=200, llm_status=200):
    def handler(request: httpx.Request) -> httpx.Response:
        if request.url.path == "/embed":
            if embed_status != 200:
                return httpx.Response(embed_status, json={"detail": "boom"})
            text = json.loads(request.content)["text"]
            return httpx.Response(200, json={"vector": mock_embedding(text, dim)})
        if request.url.path == "/complete":
            if llm_status != 200:
                return httpx.Response(llm_status, json={"detail": "boom"})
            prompt = json.loads(request.content)["prompt"]
            return httpx.Response(200, json={"completion": prompt})
        return httpx.Response(404)

    return httpx.MockTransport(handler)


@pytest.fixture
def client(tmp_path):
    settings = ServiceSettings(
        data_dir=str(tmp_path / "data"),
        embedding_url="http://mock-provider/embed",
        llm_url="http://mock-provider/complete",
    )
    app = create_app(settings, provider_transport=make_provider_transport())
    with TestClient(app) as c:
        yield c


@pytest.fixture
def bare_client(tmp_path):
    """Service with no embedding or LLM endpoints configured."""
    app = create_app(ServiceSettings(data_dir=str(tmp_path / "bare")))
    with TestClient(app) as c:
        yield c


def create_collection(client, name="papers", dimension=DIM, **overrides):
    body = {"name": name, "dimension": dimension, "metric": "cosine", "m": 4, "ef_construction": 8}
    body.update(overrides)
    response = client.post("/collections", json=body)
    assert response.status_code == 201, response.text
    return response.json()


def seed_documents(client, name="papers", count=30, dimension=DIM, seed=5):
    rng = np.random.default_rng(seed)
    items = [
        {"key": f"doc{i:03d}", "vector": (rng.random(dimension) + 0.05).tolist(), "text": f"text of doc {i}"}
        for i in range(count)
    ]
    response = client.post(f"/collections/{name}/documents", json={"items": items})
    assert response.status_code == 200, response.text
    return items


class TestCollectionLifecycle:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"

    def test_create_echoes_defaulted_config(self, client):
        desc = create_collection(client, m=16, ef_construction=200)
        assert desc["m_max0"] == 32  # defaulted to 2*M
        assert desc["metric"] == "cosine"
        assert desc["count"] == 0
        assert desc["p"] > 0 and desc["cache_capacity"] == 8 * desc["p"]

    def test_duplicate_name_conflicts(self, client):
        create_collection(client)
        response = client.post(
            "/collections", json={"name": "papers", "dimension": DIM, "m": 4, "ef_construction": 8}
        )
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "conflict"

    def test_invalid_m_rejected(self, client):
        response = client.post(
            "/collections", json={"name": "bad", "dimension": DIM, "m": 1, "ef_construction": 8}
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "invalid-params"

    def test_unsafe_name_rejected(self, client):
        response = client.post("/collections", json={"name": "no/slash", "dimension": DIM})
        assert response.status_code == 422

    def test_unknown_collection_404(self, client):
        assert client.get("/collections/nope").status_code == 404

    def test_list_collections(self, client):
        create_collection(client, "a1")
        create_collection(client, "a2")
        names = [d["name"] for d in client.get("/collections").json()]
        assert names == ["a1", "a2"]


class TestDocumentsAndQuery:
    def test_add_then_query_roundtrip(self, client):
        create_collection(client)
        items = seed_documents(client, count=20)
        first = items[0]
        response = client.post(
            "/collections/papers/query", json={"vector": first["vector"], "k": 3}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["keys"][0] == first["key"]
        assert body["distances"] == sorted(body["distances"])
        assert body["texts"][0] == first["text"]
        assert len(body["keys"]) == 3

    def test_add_returns_count(self, client):
        create_collection(client)
        rng = np.random.default_rng(0)
        items = [{"key": f"k{i}", "vector": rng.random(DIM).tolist()} for i in range(3)]
        response = client.post("/collections/papers/documents", json={"items": items})
        assert response.json() == {"added": 3}

    def test_malformed_item_is_422(self, client):
        create_collection(client)
        response = client.post(
            "/collections/papers/documents", json={"items": [{"key": "a"}]}
        )
        assert response.status_code == 422

    def test_wrong_dimension_rejected(self, client):
        create_collection(client)
        response = client.post(
            "/collections/papers/documents",
            json={"items": [{"key": "a", "vector": [1.0, 2.0]}]},
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "dimension-mismatch"

    def test_duplicate_keys_rejected_without_mutation(self, client):
        create_collection(client)
        seed_documents(client, count=5)
        rng = np.random.default_rng(1)
        response = client.post(
            "/collections/papers/documents",
            json={"items": [{"key": "doc000", "vector": rng.random(DIM).tolist()}]},
        )
        assert response.status_code == 409
        assert client.get("/collections/papers").json()["count"] == 5

    def test_query_empty_collection_409(self, client):
        create_collection(client)
        response = client.post("/collections/papers/query", json={"vector": [0.1] * DIM, "k": 1})
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "empty-collection"

    def test_query_wrong_dimension_400(self, client):
        create_collection(client)
        seed_documents(client, count=5)
        response = client.post("/collections/papers/query", json={"vector": [0.1, 0.2], "k": 1})
        assert response.status_code == 400

    def test_text_query_uses_embedding_endpoint(self, client):
        create_collection(client)
        text = "find me"
        vector = mock_embedding(text, DIM)
        rng = np.random.default_rng(3)
        items = [{"key": "target", "vector": vector, "text": text}] + [
            {"key": f"other{i}", "vector": (rng.random(DIM) + 0.05).tolist()} for i in range(10)
        ]
        client.post("/collections/papers/documents", json={"items": items})
        response = client.post("/collections/papers/query", json={"text": text, "k": 1})
        assert response.status_code == 200
        assert response.json()["keys"] == ["target"]
        assert response.json()["distances"][0] <= 1e-9

    def test_text_query_without_embedding_endpoint(self, bare_client):
        create_collection(bare_client)
        seed_documents(bare_client, count=3)
        response = bare_client.post("/collections/papers/query", json={"text": "hi", "k": 1})
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "embedding-not-configured"

    def test_unreachable_embedding_endpoint_is_502(self, tmp_path):
        settings = ServiceSettings(
            data_dir=str(tmp_path / "d502"),
            embedding_url="http://mock-provider/embed",
        )
        app = create_app(settings, provider_transport=make_provider_transport(embed_status=500))
        with TestClient(app) as client:
            create_collection(client)
            seed_documents(client, count=3)
            response = client.post("/collections/papers/query", json={"text": "hi", "k": 1})
            assert response.status_code == 502
            assert response.json()["error"]["code"] == "embedding-unavailable"

    def test_vector_and_text_together_rejected(self, client):
        create_collection(client)
        seed_documents(client, count=3)
        response = client.post(
            "/collections/papers/query",
            json={"vector": [0.1] * DIM, "text": "both", "k": 1},
        )
        assert response.status_code == 400

    def test_repeated_query_bodies_are_byte_identical(self, client):
        create_collection(client)
        seed_documents(client, count=25)
        payload = {"vector": [0.3] * DIM, "k": 5}
        bodies = {client.post("/collections/papers/query", json=payload).content for _ in range(5)}
        assert len(bodies) == 1


class TestPrompt:
    def test_prompt_with_echo_model(self, client):
        create_collection(client)
        seed_documents(client, count=12)
        response = client.post(
            "/collections/papers/prompt",
            json={"template": "Q: {{user}}\nCtx: {{context}}", "user_query": "hello", "k": 3},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["prompt"].startswith("Q: hello\nCtx: ")
        assert body["completion"] == body["prompt"]  # echo fixture
        assert body["warning"] is None
        assert len(body["retrieved"]["keys"]) == 3
        for text in body["retrieved"]["texts"]:
            assert text in body["prompt"]

    def test_prompt_without_llm_has_no_completion(self, tmp_path):
        settings = ServiceSettings(
            data_dir=str(tmp_path / "nollm"),
            embedding_url="http://mock-provider/embed",
        )
        app = create_app(settings, provider_transport=make_provider_transport())
        with TestClient(app) as client:
            create_collection(client)
            seed_documents(client, count=5)
            response = client.post(
                "/collections/papers/prompt",
                json={"template": "{{user}}::{{context}}", "user_query": "q", "k": 2},
            )
            assert response.status_code == 200
            body = response.json()
            assert body["completion"] is None
            assert body["prompt"].startswith("q::")

    def test_complete_false_skips_the_llm(self, client):
        create_collection(client)
        seed_documents(client, count=5)
        response = client.post(
            "/collections/papers/prompt",
            json={"template": "{{user}}", "user_query": "q", "k": 2, "complete": False},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["completion"] is None
        assert body["warning"] is None
        assert body["retrieved"]["keys"]

    def test_llm_failure_becomes_warning(self, tmp_path):
        settings = ServiceSettings(
            data_dir=str(tmp_path / "failllm"),
            embedding_url="http://mock-provider/embed",
            llm_url="http://mock-provider/complete",
        )
        app = create_app(settings, provider_transport=make_provider_transport(llm_status=500))
        with TestClient(app) as client:
            create_collection(client)
            seed_documents(client, count=5)
            response = client.post(
                "/collections/papers/prompt",
                json={"template": "{{user}}", "user_query": "q", "k": 2},
            )
            assert response.status_code == 200
            body = response.json()
            assert body["completion"] is None
            assert "failed" in body["warning"]


class TestSnapshotTransport:
    def test_export_import_roundtrip(self, client):
        create_collection(client)
        seed_documents(client, count=25)
        exported = client.get("/collections/papers/export?include_vectors=true")
        assert exported.status_code == 200
        response = client.post("/collections/copy/import", content=exported.content)
        assert response.status_code == 201, response.text
        assert response.json()["count"] == 25
        probe = {"vector": [0.4] * DIM, "k": 5}
        a = client.post("/collections/papers/query", json=probe).json()
        b = client.post("/collections/copy/import".replace("/import", "/query"), json=probe).json()
        assert a["keys"] == b["keys"]
        assert a["distances"] == b["distances"]

    def test_import_existing_name_conflicts(self, client):
        create_collection(client)
        seed_documents(client, count=5)
        exported = client.get("/collections/papers/export?include_vectors=true").content
        response = client.post("/collections/papers/import", content=exported)
        assert response.status_code == 409

    def test_import_malformed_stream_reports_line(self, client):
        create_collection(client)
        seed_documents(client, count=5)
        exported = client.get("/collections/papers/export?include_vectors=true").content
        lines = exported.splitlines(keepends=True)
        lines[2] = b"BROKEN\n"
        response = client.post("/collections/broken/import", content=b"".join(lines))
        assert response.status_code == 400
        assert response.json()["error"]["line"] == 3
        # failed import must not leave a half-created collection behind
        assert client.get("/collections/broken").status_code == 404

    def test_topology_only_import_rejected(self, client):
        create_collection(client)
        seed_documents(client, count=5)
        exported = client.get("/collections/papers/export?include_vectors=false").content
        response = client.post("/collections/topo/import", content=exported)
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "import-requires-vectors"


class TestBuildsAndConsistency:
    def test_background_build_with_status(self, client):
        create_collection(client)
        rng = np.random.default_rng(2)
        items = [{"key": f"bg{i:04d}", "vector": rng.random(DIM).tolist()} for i in range(400)]
        response = client.post(
            "/collections/papers/documents", json={"items": items, "wait": False}
        )
        assert response.status_code == 202
        deadline = time.time() + 30
        while time.time() < deadline:
            status = client.get("/collections/papers/build").json()
            assert status["state"] in ("running", "done")
            if status["state"] == "done":
                break
            time.sleep(0.05)
        assert status["state"] == "done"
        assert status["inserted"] == 400
        assert status["progress"] == 1.0
        assert client.get("/collections/papers").json()["count"] == 400

    def test_queries_rejected_while_build_runs(self, client):
        create_collection(client)
        seed_documents(client, count=10)
        collection = client.app.state.manager.get("papers")
        assert collection.gate.try_write()  # simulate an in-flight build
        try:
            response = client.post(
                "/collections/papers/query", json={"vector": [0.1] * DIM, "k": 1}
            )
            assert response.status_code == 409
            assert response.json()["error"]["code"] == "busy"
            second = client.post(
                "/collections/papers/documents",
                json={"items": [{"key": "x", "vector": [0.1] * DIM}]},
            )
            assert second.status_code == 409
        finally:
            collection.gate.done_write()

    def test_consistency_endpoint(self, client):
        create_collection(client)
        seed_documents(client, count=15)
        report = client.get("/collections/papers/consistency").json()
        assert report["consistent"] is True
        assert report["store_count"] == report["graph_count"] == 15

    def test_empty_collection_survives_restart(self, tmp_path):
        settings = ServiceSettings(data_dir=str(tmp_path / "empty"))
        with TestClient(create_app(settings)) as client:
            create_collection(client, "fresh")
        with TestClient(create_app(settings)) as client:
            desc = client.get("/collections/fresh").json()
            assert desc["count"] == 0
            assert desc["m_max0"] == 8  # config round-trips (m=4 fixture default)

    def test_restart_recovers_collections(self, tmp_path):
        data_dir = str(tmp_path / "persist")
        settings = ServiceSettings(data_dir=data_dir)
        probe = {"vector": [0.2] * DIM, "k": 3}
        with TestClient(create_app(settings)) as client:
            create_collection(client)
            seed_documents(client, count=20)
            first = client.post("/collections/papers/query", json=probe).json()
        with TestClient(create_app(settings)) as client:
            desc = client.get("/collections/papers").json()
            assert desc["count"] == 20
            again = client.post("/collections/papers/query", json=probe).json()
            assert again == first

    def test_shutdown_mid_build_leaves_consistent_collection(self, tmp_path):
        data_dir = str(tmp_path / "interrupt")
        settings = ServiceSettings(data_dir=data_dir)
        rng = np.random.default_rng(4)
        items = [{"key": f"big{i:05d}", "vector": rng.random(DIM).tolist()} for i in range(3000)]
        with TestClient(create_app(settings)) as client:
            create_collection(client, m=8, ef_construction=32)
            response = client.post(
                "/collections/papers/documents", json={"items": items, "wait": False}
            )
            assert response.status_code == 202
            # leave the context: lifespan shutdown cancels the running build
        with TestClient(create_app(settings)) as client:
            report = client.get("/collections/papers/consistency").json()
            assert report["consistent"] is True
            count = client.get("/collections/papers").json()["count"]
            assert 0 <= count <= 3000


class TestConfigEndpoint:
    def test_reports_provider_configuration(self, client, bare_client):
        assert client.get("/config").json()["embedding_configured"] is True
        body = bare_client.get("/config").json()
        assert body["embedding_configured"] is False
        assert body["llm_configured"] is False
