"""HTTP API for the conversational QA engine.

JSON endpoints plus a server-sent-event stream for the chat interface:

    POST /sessions                      -> {"session_id": ...}
    POST /sessions/{id}/messages        -> SSE stream (mode=streaming)
                                           or StructuredAnswer JSON (mode=structured)
    GET  /sessions/{id}                 -> session transcript
    GET  /healthz                       -> {"status": "ok"}
"""

from __future__ import annotations

import json
from typing import Iterator

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from apofasis.rag import (
    GenerationFailed,
    RagEngine,
    RetrievalFailed,
    SessionNotFound,
)


class MessageRequest(BaseModel):
    question: str
    mode: str = "streaming"


def _sse_event(event: str, data: str) -> str:
    lines = "".join(f"data: {line}\n" for line in data.split("\n"))
    return f"event: {event}\n{lines}\n"


def create_app(engine: RagEngine) -> FastAPI:
    app = FastAPI(title="apofasis", version="0.1.0")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/sessions")
    def create_session() -> dict:
        return {"session_id": engine.create_session()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        try:
            return engine.get_session(session_id).to_json()
        except SessionNotFound:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, message: MessageRequest):
        if not engine.sessions.exists(session_id):
            raise HTTPException(status_code=404, detail="unknown session")
        if message.mode == "structured":
            try:
                result = engine.answer(session_id, message.question, mode="structured")
            except (RetrievalFailed, GenerationFailed) as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            payload = result.structured.to_json()  # type: ignore[union-attr]
            payload["unsupported_citations"] = list(result.unsupported_citations)
            return payload
        if message.mode != "streaming":
            raise HTTPException(status_code=422, detail=f"unknown mode {message.mode!r}")

        def stream() -> Iterator[str]:
            try:
                for chunk in engine.stream_answer(session_id, message.question):
                    yield _sse_event("token", chunk)
                transcript = engine.get_session(session_id)
                final = transcript.turns[-1]
                yield _sse_event(
                    "done", json.dumps({"citations": list(final.cited_adas)}, ensure_ascii=False)
                )
            except (RetrievalFailed, GenerationFailed) as exc:
                yield _sse_event("error", str(exc))

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(engine: RagEngine, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(engine), host=host, port=port, log_level="warning")
