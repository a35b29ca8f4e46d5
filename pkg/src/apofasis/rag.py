"""Citation-grounded conversational QA over the lexical index.

Pipeline per question: build a context-aware retrieval query from the
session history, search the index, assemble an evidence context, build the
four-part prompt, generate, then persist both turns. Sessions are stored as
deflate-compressed JSON in a file-backed key-value store.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import uuid
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Protocol
from urllib.parse import quote

from apofasis.corpus import ADA_RE, validate_ada
from apofasis.index import SearchHit, SearchIndex

USER = "user"
ASSISTANT = "assistant"

DEFAULT_TOP_K = 8
HISTORY_WINDOW = 5
PER_HIT_CHARS = 2000
TOTAL_BUDGET_CHARS = 16000
MAX_OUTPUT_TOKENS = 1500

# v1 system message. Keep in sync with the prompt snapshot test.
SYSTEM_MESSAGE = (
    "Είσαι βοηθός για δημόσιες διοικητικές αποφάσεις. Απαντάς στα ελληνικά, "
    "στηρίζεσαι αποκλειστικά στα τεκμήρια που σου δίνονται και αναφέρεις πάντα "
    "τους κωδικούς ΑΔΑ (ADA) των αποφάσεων που τεκμηριώνουν την απάντησή σου."
)

_CITATION_RE = re.compile(
    rf"(?<![0-9A-ZΑ-ΡΣ-Ω]){ADA_RE.pattern}(?![0-9A-ZΑ-ΡΣ-Ω])"
)


class RetrievalFailed(RuntimeError):
    pass


class GenerationFailed(RuntimeError):
    pass


class StoreUnavailable(RuntimeError):
    pass


class SessionNotFound(KeyError):
    pass


@dataclass(frozen=True)
class ChatTurn:
    role: str
    text: str
    cited_adas: tuple[str, ...] = ()
    timestamp: float = 0.0
    detail: str | None = None
    error: str | None = None

    def to_json(self) -> dict:
        doc: dict = {
            "role": self.role,
            "text": self.text,
            "cited_adas": list(self.cited_adas),
            "timestamp": self.timestamp,
        }
        if self.detail is not None:
            doc["detail"] = self.detail
        if self.error is not None:
            doc["error"] = self.error
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ChatTurn":
        return cls(
            role=str(doc["role"]),
            text=str(doc["text"]),
            cited_adas=tuple(str(a) for a in doc.get("cited_adas", [])),
            timestamp=float(doc.get("timestamp", 0.0)),
            detail=doc.get("detail"),
            error=doc.get("error"),
        )


@dataclass
class ChatSession:
    session_id: str
    turns: list[ChatTurn] = field(default_factory=list)

    def validate(self) -> None:
        expected = USER
        for turn in self.turns:
            if turn.role != expected:
                raise ValueError("turn roles must alternate starting with user")
            expected = ASSISTANT if expected == USER else USER
        for turn in self.turns:
            for ada in turn.cited_adas:
                if not validate_ada(ada):
                    raise ValueError(f"invalid cited ADA {ada!r}")

    def to_json(self) -> dict:
        return {"session_id": self.session_id, "turns": [t.to_json() for t in self.turns]}

    @classmethod
    def from_json(cls, doc: dict) -> "ChatSession":
        return cls(
            session_id=str(doc["session_id"]),
            turns=[ChatTurn.from_json(t) for t in doc.get("turns", [])],
        )


class SessionStore:
    """File-backed key-value store; one deflate-compressed JSON blob per session."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreUnavailable(str(exc)) from exc

    def _path(self, session_id: str) -> Path:
        return self.root / (quote(session_id, safe="") + ".json.z")

    def save(self, session: ChatSession) -> None:
        payload = zlib.compress(
            json.dumps(session.to_json(), ensure_ascii=False).encode("utf-8")
        )
        path = self._path(session.session_id)
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_bytes(payload)
            os.replace(tmp, path)
        except OSError as exc:
            raise StoreUnavailable(str(exc)) from exc

    def load(self, session_id: str) -> ChatSession:
        path = self._path(session_id)
        if not path.is_file():
            raise SessionNotFound(session_id)
        doc = json.loads(zlib.decompress(path.read_bytes()).decode("utf-8"))
        return ChatSession.from_json(doc)

    def exists(self, session_id: str) -> bool:
        return self._path(session_id).is_file()


@dataclass(frozen=True)
class StructuredAnswer:
    concise_answer: str
    detailed_explanation: str
    citations: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "concise_answer": self.concise_answer,
            "detailed_explanation": self.detailed_explanation,
            "citations": list(self.citations),
        }


class GeneratorPort(Protocol):
    max_output_tokens: int

    def generate(self, prompt: str) -> Iterator[str]: ...

    def generate_structured(self, prompt: str) -> StructuredAnswer: ...


def build_retrieval_query(session: ChatSession, question: str,
                          max_turns: int = HISTORY_WINDOW) -> str:
    """Question followed by up to the N most recent prior turn texts.

    The window counts individual messages (user and assistant alike), kept in
    chronological order.
    """
    recent = [t.text for t in session.turns[-max_turns:] if t.text]
    return " ".join([question, *recent]).strip()


def assemble_evidence(hits: list[SearchHit], per_hit_chars: int = PER_HIT_CHARS,
                      total_budget_chars: int = TOTAL_BUDGET_CHARS) -> str:
    """Evidence blocks "[ADA: …]\\n<content prefix>" within a character budget.

    The budget counts excerpted content characters only; at least one block
    is emitted when any hit exists.
    """
    blocks: list[str] = []
    used = 0
    for hit in hits:
        chunk = hit.excerpt[:per_hit_chars]
        if blocks and used + len(chunk) > total_budget_chars:
            break
        blocks.append(f"[ADA: {hit.ada}]\n{chunk}")
        used += len(chunk)
    return "\n\n".join(blocks)


def build_prompt(session: ChatSession, evidence: str, question: str,
                 history_window: int = HISTORY_WINDOW) -> str:
    """Four fixed parts: system message, history, evidence, question."""
    history_lines = [
        f"{t.role}: {t.text}" for t in session.turns[-history_window:] if t.text
    ]
    return "\n".join(
        [
            "=== SYSTEM ===",
            SYSTEM_MESSAGE,
            "=== HISTORY ===",
            "\n".join(history_lines),
            "=== EVIDENCE ===",
            evidence,
            "=== QUESTION ===",
            question,
        ]
    )


def extract_ada_citations(text: str) -> list[str]:
    """All decision identifiers in the text, deduplicated, first-seen order."""
    seen: list[str] = []
    for match in _CITATION_RE.finditer(text):
        if match.group(0) not in seen:
            seen.append(match.group(0))
    return seen


@dataclass
class AnswerResult:
    session_id: str
    question: str
    text: str
    citations: tuple[str, ...]
    structured: StructuredAnswer | None = None
    evidence_adas: tuple[str, ...] = ()
    unsupported_citations: tuple[str, ...] = ()


class RagEngine:
    """Ties index, generator and session store together.

    Requests for distinct sessions run concurrently; requests for the same
    session are serialized by a per-session lock.
    """

    def __init__(
        self,
        index: SearchIndex,
        generator: GeneratorPort,
        sessions: SessionStore,
        top_k: int = DEFAULT_TOP_K,
        history_window: int = HISTORY_WINDOW,
        per_hit_chars: int = PER_HIT_CHARS,
        total_budget_chars: int = TOTAL_BUDGET_CHARS,
        clock=time.time,
    ):
        self.index = index
        self.generator = generator
        self.sessions = sessions
        self.top_k = top_k
        self.history_window = history_window
        self.per_hit_chars = per_hit_chars
        self.total_budget_chars = total_budget_chars
        self.clock = clock
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def create_session(self) -> str:
        session_id = uuid.uuid4().hex
        self.sessions.save(ChatSession(session_id=session_id))
        return session_id

    def get_session(self, session_id: str) -> ChatSession:
        return self.sessions.load(session_id)

    def _retrieve(self, session: ChatSession, question: str) -> tuple[list[SearchHit], str]:
        query = build_retrieval_query(session, question, self.history_window)
        try:
            hits = self.index.search(query, self.top_k)
        except Exception as exc:
            raise RetrievalFailed(str(exc)) from exc
        evidence = assemble_evidence(hits, self.per_hit_chars, self.total_budget_chars)
        return hits, evidence

    def _record_failure(self, session: ChatSession, question: str, error: str) -> None:
        now = self.clock()
        session.turns.append(ChatTurn(role=USER, text=question, timestamp=now))
        session.turns.append(ChatTurn(role=ASSISTANT, text="", timestamp=now, error=error))
        self.sessions.save(session)

    def _finalize(
        self,
        session: ChatSession,
        question: str,
        text: str,
        citations: tuple[str, ...],
        detail: str | None,
        evidence: str,
    ) -> AnswerResult:
        now = self.clock()
        evidence_adas = tuple(extract_ada_citations(evidence))
        unsupported = tuple(c for c in citations if c not in evidence_adas)
        session.turns.append(ChatTurn(role=USER, text=question, timestamp=now))
        session.turns.append(
            ChatTurn(role=ASSISTANT, text=text, cited_adas=citations,
                     timestamp=now, detail=detail)
        )
        self.sessions.save(session)
        return AnswerResult(
            session_id=session.session_id,
            question=question,
            text=text,
            citations=citations,
            evidence_adas=evidence_adas,
            unsupported_citations=unsupported,
        )

    def answer(self, session_id: str, question: str, mode: str = "structured") -> AnswerResult:
        """Run the full pipeline and persist both turns before returning.

        On retrieval/generation failure the user turn plus an error-marker
        assistant turn are persisted, then the error propagates.
        """
        if mode not in ("structured", "streaming"):
            raise ValueError(f"unknown mode {mode!r}")
        with self._session_lock(session_id):
            session = self.sessions.load(session_id)
            try:
                _, evidence = self._retrieve(session, question)
            except RetrievalFailed as exc:
                self._record_failure(session, question, f"retrieval: {exc}")
                raise
            prompt = build_prompt(session, evidence, question, self.history_window)
            if mode == "structured":
                try:
                    structured = self._generate_structured(prompt, evidence)
                except GenerationFailed as exc:
                    self._record_failure(session, question, f"generation: {exc}")
                    raise
                result = self._finalize(
                    session, question, structured.concise_answer,
                    tuple(structured.citations), structured.detailed_explanation, evidence,
                )
                result.structured = structured
                return result
            try:
                text = "".join(self.generator.generate(prompt))
            except Exception as exc:
                self._record_failure(session, question, f"generation: {exc}")
                raise GenerationFailed(str(exc)) from exc
            citations = tuple(extract_ada_citations(text))
            return self._finalize(session, question, text, citations, None, evidence)

    def _generate_structured(self, prompt: str, evidence: str) -> StructuredAnswer:
        """Generate and schema-validate; one retry on non-conforming output."""
        last_error = ""
        for _ in range(2):
            try:
                candidate = self.generator.generate_structured(prompt)
            except Exception as exc:
                last_error = str(exc)
                continue
            problem = _structured_problem(candidate, evidence)
            if problem is None:
                return candidate
            last_error = problem
        raise GenerationFailed(last_error or "structured generation failed")

    def stream_answer(self, session_id: str, question: str) -> Iterator[str]:
        """Streaming variant: yields text chunks, persists turns at the end."""
        with self._session_lock(session_id):
            session = self.sessions.load(session_id)
            try:
                _, evidence = self._retrieve(session, question)
            except RetrievalFailed as exc:
                self._record_failure(session, question, f"retrieval: {exc}")
                raise
            prompt = build_prompt(session, evidence, question, self.history_window)
            chunks: list[str] = []
            try:
                for chunk in self.generator.generate(prompt):
                    chunks.append(chunk)
                    yield chunk
            except Exception as exc:
                self._record_failure(session, question, f"generation: {exc}")
                raise GenerationFailed(str(exc)) from exc
            text = "".join(chunks)
            self._finalize(session, question, text, tuple(extract_ada_citations(text)),
                           None, evidence)


def _structured_problem(answer: StructuredAnswer, evidence: str) -> str | None:
    if not isinstance(answer, StructuredAnswer):
        return "response does not match the answer schema"
    for ada in answer.citations:
        if not validate_ada(ada):
            return f"citation {ada!r} is not a valid ADA"
    if evidence and not answer.citations:
        return "evidence was retrieved but the answer cites nothing"
    return None
