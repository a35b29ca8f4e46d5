from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from apofasis.corpus import StoredDocument
from apofasis.index import SearchIndex
from apofasis.rag import RagEngine, SessionStore
from apofasis.service import create_app
from apofasis.testing import EchoGenerator, synthetic_record


@pytest.fixture
def client(tmp_path):
    index = SearchIndex()
    index.index_document(
        StoredDocument(record=synthetic_record("AAAAAAAA-AAA"),
                       body_markdown="δαπάνη έργου ύδρευσης")
    )
    engine = RagEngine(index, EchoGenerator(), SessionStore(tmp_path / "sessions"))
    return TestClient(create_app(engine))


def test_healthz(client):
    response = client.get("/healthz")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_create_session(client):
    response = client.post("/sessions")
    assert response.status_code == 200
    assert response.json()["session_id"]


def test_unknown_session_404(client):
    assert client.get("/sessions/nope").status_code == 404
    assert client.post("/sessions/nope/messages",
                       json={"question": "x", "mode": "structured"}).status_code == 404


def test_structured_message_round_trip(client):
    session_id = client.post("/sessions").json()["session_id"]
    response = client.post(
        f"/sessions/{session_id}/messages",
        json={"question": "δαπάνη ύδρευσης", "mode": "structured"},
    )
    assert response.status_code == 200
    payload = response.json()
    assert payload["citations"] == ["AAAAAAAA-AAA"]
    assert payload["concise_answer"]
    assert payload["unsupported_citations"] == []

    transcript = client.get(f"/sessions/{session_id}").json()
    assert len(transcript["turns"]) == 2
    assert transcript["turns"][0]["role"] == "user"


def test_streaming_message_is_event_stream(client):
    session_id = client.post("/sessions").json()["session_id"]
    with client.stream(
        "POST",
        f"/sessions/{session_id}/messages",
        json={"question": "δαπάνη ύδρευσης", "mode": "streaming"},
    ) as response:
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/event-stream")
        body = "".join(response.iter_text())
    assert "event: token" in body
    assert "event: done" in body
    assert "AAAAAAAA-AAA" in body
    transcript = client.get(f"/sessions/{session_id}").json()
    assert len(transcript["turns"]) == 2


def test_unknown_mode_rejected(client):
    session_id = client.post("/sessions").json()["session_id"]
    response = client.post(
        f"/sessions/{session_id}/messages", json={"question": "x", "mode": "μυστήριο"}
    )
    assert response.status_code == 422


def test_two_tabs_get_distinct_sessions(client):
    first = client.post("/sessions").json()["session_id"]
    second = client.post("/sessions").json()["session_id"]
    assert first != second
