from __future__ import annotations

import json
import threading
import zlib

import pytest

from apofasis.corpus import StoredDocument
from apofasis.index import SearchHit, SearchIndex
from apofasis.rag import (
    ASSISTANT,
    SYSTEM_MESSAGE,
    USER,
    ChatSession,
    ChatTurn,
    GenerationFailed,
    RagEngine,
    SessionNotFound,
    SessionStore,
    StructuredAnswer,
    assemble_evidence,
    build_prompt,
    build_retrieval_query,
    extract_ada_citations,
)
from apofasis.testing import EchoGenerator, ScriptedGenerator, synthetic_record


def _session(texts: list[str]) -> ChatSession:
    turns = []
    for i, text in enumerate(texts):
        role = USER if i % 2 == 0 else ASSISTANT
        turns.append(ChatTurn(role=role, text=text, timestamp=float(i)))
    return ChatSession(session_id="s1", turns=turns)


def _hit(ada: str, body: str, score: float = 1.0) -> SearchHit:
    return SearchHit(ada=ada, score=score, excerpt=body)


def _engine(tmp_path, generator=None, bodies=None, k=8) -> RagEngine:
    index = SearchIndex()
    bodies = bodies or {
        "AAAAAAAA-AAA": "πληρωμή δαπάνης για έργο ύδρευσης",
        "BBBBBBBB-BBB": "έγκριση πρόσληψης προσωπικού",
    }
    for ada, body in bodies.items():
        index.index_document(
            StoredDocument(record=synthetic_record(ada), body_markdown=body)
        )
    store = SessionStore(tmp_path / "sessions")
    return RagEngine(index, generator or EchoGenerator(), store, top_k=k,
                     clock=lambda: 1234.0)


class TestBuildRetrievalQuery:
    def test_empty_session_is_just_the_question(self):
        assert build_retrieval_query(_session([]), "ερώτηση") == "ερώτηση"

    def test_seven_prior_turns_keep_last_five(self):
        session = _session([f"μήνυμα{i}" for i in range(7)])
        query = build_retrieval_query(session, "ερώτηση")
        assert query == "ερώτηση μήνυμα2 μήνυμα3 μήνυμα4 μήνυμα5 μήνυμα6"

    def test_deterministic(self):
        session = _session(["α", "β"])
        assert build_retrieval_query(session, "γ") == build_retrieval_query(session, "γ")


class TestAssembleEvidence:
    def test_no_hits_empty_string(self):
        assert assemble_evidence([]) == ""

    def test_eight_full_hits_fit_exactly(self):
        hits = [_hit(f"AAAAAAA{i}-AAA", "χ" * 2500) for i in range(8)]
        evidence = assemble_evidence(hits, per_hit_chars=2000, total_budget_chars=16000)
        assert evidence.count("[ADA:") == 8

    def test_ninth_hit_does_not_fit(self):
        hits = [_hit(f"AAAAAAA{i}-AAA", "χ" * 2500) for i in range(9)]
        evidence = assemble_evidence(hits, per_hit_chars=2000, total_budget_chars=16000)
        assert evidence.count("[ADA:") == 8

    def test_short_body_kept_whole(self):
        evidence = assemble_evidence([_hit("AAAAAAAA-AAA", "μικρό σώμα")])
        assert "μικρό σώμα" in evidence

    def test_first_block_always_emitted(self):
        evidence = assemble_evidence([_hit("AAAAAAAA-AAA", "χ" * 500)],
                                     per_hit_chars=400, total_budget_chars=100)
        assert evidence.count("[ADA:") == 1


class TestBuildPrompt:
    def test_four_parts_in_order(self):
        prompt = build_prompt(_session(["ιστορικό"]), "τεκμήρια", "ερώτηση")
        system = prompt.index("=== SYSTEM ===")
        history = prompt.index("=== HISTORY ===")
        evidence = prompt.index("=== EVIDENCE ===")
        question = prompt.index("=== QUESTION ===")
        assert system < history < evidence < question

    def test_empty_evidence_keeps_four_parts(self):
        prompt = build_prompt(_session([]), "", "ερώτηση")
        assert prompt.count("===") == 8

    def test_system_message_requires_ada_citations(self):
        assert "ΑΔΑ" in SYSTEM_MESSAGE or "ADA" in SYSTEM_MESSAGE

    def test_golden_snapshot(self):
        session = _session(["πρώτη ερώτηση", "πρώτη απάντηση"])
        prompt = build_prompt(session, "[ADA: AAAAAAAA-AAA]\nσώμα", "δεύτερη ερώτηση")
        expected = (
            "=== SYSTEM ===\n"
            f"{SYSTEM_MESSAGE}\n"
            "=== HISTORY ===\n"
            "user: πρώτη ερώτηση\n"
            "assistant: πρώτη απάντηση\n"
            "=== EVIDENCE ===\n"
            "[ADA: AAAAAAAA-AAA]\nσώμα\n"
            "=== QUESTION ===\n"
            "δεύτερη ερώτηση"
        )
        assert prompt == expected


class TestExtractCitations:
    def test_printed_examples(self):
        text = "βλ. ΨΣ02ΟΕΨΠ-ΛΔΤ και 6Μ6ΨΟΕΨΠ-ΛΗ2"
        assert extract_ada_citations(text) == ["ΨΣ02ΟΕΨΠ-ΛΔΤ", "6Μ6ΨΟΕΨΠ-ΛΗ2"]

    def test_no_citations(self):
        assert extract_ada_citations("κανένα αναγνωριστικό εδώ") == []

    def test_duplicates_listed_once(self):
        text = "ΨΣ02ΟΕΨΠ-ΛΔΤ ξανά ΨΣ02ΟΕΨΠ-ΛΔΤ"
        assert extract_ada_citations(text) == ["ΨΣ02ΟΕΨΠ-ΛΔΤ"]

    def test_embedded_in_longer_token_rejected(self):
        assert extract_ada_citations("XΨΣ02ΟΕΨΠ-ΛΔΤ1") == []


class TestSessionStore:
    def test_round_trip(self, tmp_path):
        store = SessionStore(tmp_path)
        session = _session(["ερώτηση", "απάντηση"])
        store.save(session)
        assert store.load("s1") == session

    def test_missing_id_not_found(self, tmp_path):
        with pytest.raises(SessionNotFound):
            SessionStore(tmp_path).load("missing")

    def test_payload_is_deflate_compressed_and_smaller(self, tmp_path):
        store = SessionStore(tmp_path)
        session = _session(["επαναλαμβανόμενο κείμενο συνεδρίας"] * 100)
        store.save(session)
        path = store._path("s1")
        raw_json = json.dumps(session.to_json(), ensure_ascii=False).encode("utf-8")
        assert path.stat().st_size < len(raw_json)
        assert zlib.decompress(path.read_bytes())  # valid deflate stream

    def test_concurrent_saves_to_distinct_sessions(self, tmp_path):
        store = SessionStore(tmp_path)
        errors = []

        def save(i):
            try:
                store.save(ChatSession(session_id=f"s{i}",
                                       turns=[ChatTurn(role=USER, text=f"κείμενο {i}")]))
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=save, args=(i,)) for i in range(12)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        for i in range(12):
            assert store.load(f"s{i}").turns[0].text == f"κείμενο {i}"


class TestSessionInvariants:
    def test_alternation_enforced(self):
        bad = ChatSession(
            session_id="x",
            turns=[ChatTurn(role=USER, text="α"), ChatTurn(role=USER, text="β")],
        )
        with pytest.raises(ValueError):
            bad.validate()

    def test_cited_adas_validated(self):
        bad = ChatSession(
            session_id="x",
            turns=[
                ChatTurn(role=USER, text="α"),
                ChatTurn(role=ASSISTANT, text="β", cited_adas=("not-an-ada",)),
            ],
        )
        with pytest.raises(ValueError):
            bad.validate()


class TestAnswerPipeline:
    def test_echo_generator_cites_top_hit_and_grows_session(self, tmp_path):
        engine = _engine(tmp_path)
        session_id = engine.create_session()
        result = engine.answer(session_id, "δαπάνη ύδρευσης")
        assert result.citations == ("AAAAAAAA-AAA",)
        assert result.unsupported_citations == ()
        session = engine.get_session(session_id)
        assert len(session.turns) == 2
        assert session.turns[0].role == USER
        assert session.turns[1].cited_adas == ("AAAAAAAA-AAA",)
        session.validate()

    def test_stopword_question_gets_graceful_no_evidence_answer(self, tmp_path):
        engine = _engine(tmp_path)
        session_id = engine.create_session()
        result = engine.answer(session_id, "και για το")
        assert result.citations == ()
        assert result.text
        assert len(engine.get_session(session_id).turns) == 2

    def test_follow_up_query_includes_prior_turns(self, tmp_path):
        captured = []

        class CapturingIndex(SearchIndex):
            def search(self, query, k=8):
                captured.append(query)
                return super().search(query, k)

        index = CapturingIndex()
        index.index_document(
            StoredDocument(record=synthetic_record("AAAAAAAA-AAA"),
                           body_markdown="δαπάνη έργου")
        )
        engine = RagEngine(index, EchoGenerator(), SessionStore(tmp_path / "s"))
        session_id = engine.create_session()
        engine.answer(session_id, "πρώτη δαπάνη")
        engine.answer(session_id, "αυτές οι αποφάσεις")
        assert "πρώτη δαπάνη" in captured[1]
        assert captured[1].startswith("αυτές οι αποφάσεις")

    def test_structured_mode_returns_structured_answer(self, tmp_path):
        engine = _engine(tmp_path)
        session_id = engine.create_session()
        result = engine.answer(session_id, "δαπάνη ύδρευσης", mode="structured")
        assert result.structured is not None
        assert result.structured.citations == ("AAAAAAAA-AAA",)
        transcript = engine.get_session(session_id)
        assert transcript.turns[-1].detail == result.structured.detailed_explanation

    def test_streaming_mode_extracts_citations_from_text(self, tmp_path):
        engine = _engine(tmp_path)
        session_id = engine.create_session()
        result = engine.answer(session_id, "δαπάνη ύδρευσης", mode="streaming")
        assert result.citations == ("AAAAAAAA-AAA",)

    def test_structured_validation_retries_then_fails(self, tmp_path):
        class BadStructured:
            max_output_tokens = 1500

            def __init__(self):
                self.calls = 0

            def generate(self, prompt):
                yield ""

            def generate_structured(self, prompt):
                self.calls += 1
                return StructuredAnswer(
                    concise_answer="x", detailed_explanation="y", citations=("bogus",)
                )

        generator = BadStructured()
        engine = _engine(tmp_path, generator=generator)
        session_id = engine.create_session()
        with pytest.raises(GenerationFailed):
            engine.answer(session_id, "δαπάνη ύδρευσης", mode="structured")
        assert generator.calls == 2
        # failure recorded as user turn + error marker, no partial answer
        session = engine.get_session(session_id)
        assert len(session.turns) == 2
        assert session.turns[1].error is not None
        assert session.turns[1].text == ""

    def test_unfabricated_citations_flagged(self, tmp_path):
        generator = ScriptedGenerator(text="άσχετη απάντηση με ΧΧΧΧΧΧΧΧ-ΧΧ1")
        engine = _engine(tmp_path, generator=generator)
        session_id = engine.create_session()
        result = engine.answer(session_id, "δαπάνη ύδρευσης", mode="streaming")
        assert "ΧΧΧΧΧΧΧΧ-ΧΧ1" in result.unsupported_citations

    def test_session_turns_append_only(self, tmp_path):
        engine = _engine(tmp_path)
        session_id = engine.create_session()
        lengths = []
        for question in ("δαπάνη", "έργο", "πρόσληψη"):
            engine.answer(session_id, question)
            lengths.append(len(engine.get_session(session_id).turns))
        assert lengths == [2, 4, 6]

    def test_stream_answer_yields_chunks_then_persists(self, tmp_path):
        engine = _engine(tmp_path)
        session_id = engine.create_session()
        chunks = list(engine.stream_answer(session_id, "δαπάνη ύδρευσης"))
        assert chunks
        session = engine.get_session(session_id)
        assert session.turns[-1].text == "".join(chunks)
