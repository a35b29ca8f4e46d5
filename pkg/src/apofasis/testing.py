"""Hermetic test doubles: stub decisions API, fake clock, stub generators,
and synthetic corpus factories.

Bundled with the package (not the test suite) so the acceptance checks, the
benchmark and downstream users can run fully offline.
"""

from __future__ import annotations

import json
import random
import threading
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterator, Sequence
from urllib.parse import parse_qs, unquote, urlparse

from apofasis.boiler import CONTENT, BOILERPLATE, DocPair, Segmentation, Span
from apofasis.corpus import (
    CorpusLayout,
    DecisionRecord,
    StoredDocument,
    store_document,
)
from apofasis.rag import StructuredAnswer, extract_ada_citations

GREEK_ALPHABET = "ΑΒΓΔΕΖΗΘΙΚΛΜΝΞΟΠΡΣΤΥΦΧΨΩ0123456789"


class FakeClock:
    """Monotonic clock whose sleep() advances time instantly."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def monotonic(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self._now += max(0.0, seconds)


# -- stub decisions API ------------------------------------------------------


class StubDiavgeiaServer:
    """Threaded HTTP stub of the decisions API, fed from in-memory documents.

    Counts requests per (endpoint, page) so tests can assert that a resumed
    harvest never refetches a finished page. `force_status` maps a path
    prefix to (status, remaining_hits) for fault injection; `malformed_pages`
    injects one unparseable entry into the listed search pages.
    """

    def __init__(self, docs: Sequence[StoredDocument], malformed_pages: Sequence[int] = ()):
        self.docs = {d.record.ada: d for d in docs}
        self.order = sorted(self.docs)
        self.malformed_pages = set(malformed_pages)
        self.request_counts: Counter = Counter()
        self.force_status: dict[str, list[int]] = {}  # prefix -> [status, remaining]
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # context manager
    def __enter__(self) -> "StubDiavgeiaServer":
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # silence test output
                pass

            def do_GET(self):
                stub._handle(self)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        if self._server:
            self._server.shutdown()
            self._server.server_close()

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address  # type: ignore[union-attr]
        return f"http://{host}:{port}"

    def _forced(self, path: str) -> int | None:
        for prefix, slot in self.force_status.items():
            if path.startswith(prefix) and slot[1] > 0:
                slot[1] -= 1
                return slot[0]
        return None

    def _handle(self, handler: BaseHTTPRequestHandler) -> None:
        parsed = urlparse(handler.path)
        path = unquote(parsed.path)
        query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        if path == "/search":
            self.request_counts[("search", int(query.get("page", 0)))] += 1
        else:
            self.request_counts[(path, 0)] += 1

        forced = self._forced(path)
        if forced is not None:
            self._respond(handler, forced, b"forced error")
            return

        if path == "/search":
            self._serve_search(handler, query)
        elif path.startswith("/decisions/") and path.endswith("/document.txt"):
            ada = path[len("/decisions/") : -len("/document.txt")]
            doc = self.docs.get(ada)
            if doc is None:
                self._respond(handler, 404, b"not found")
            else:
                self._respond(handler, 200, doc.body_markdown.encode("utf-8"), "text/plain")
        elif path.startswith("/decisions/") and path.endswith("/document.pdf"):
            ada = path[len("/decisions/") : -len("/document.pdf")]
            doc = self.docs.get(ada)
            if doc is None:
                self._respond(handler, 404, b"not found")
            else:
                self._respond(handler, 200, b"%PDF-stub " + doc.body_markdown.encode("utf-8"),
                              "application/pdf")
        elif path.startswith("/decisions/"):
            ada = path[len("/decisions/") :]
            doc = self.docs.get(ada)
            if doc is None:
                self._respond(handler, 404, b"not found")
            else:
                body = json.dumps(doc.record.to_json(), ensure_ascii=False).encode("utf-8")
                self._respond(handler, 200, body, "application/json")
        else:
            self._respond(handler, 404, b"unknown path")

    def _serve_search(self, handler: BaseHTTPRequestHandler, query: dict) -> None:
        page = int(query.get("page", 0))
        size = int(query.get("size", 100))
        org = query.get("org")
        adas = self.order
        if org:
            adas = [a for a in adas if self.docs[a].record.organization_id == org]
        entries = [self.docs[a].record.to_json() for a in adas[page * size : (page + 1) * size]]
        if page in self.malformed_pages and entries:
            entries.insert(1, {"ada": "", "subject": "malformed"})
        body = json.dumps({"decisions": entries, "page": page}, ensure_ascii=False)
        self._respond(handler, 200, body.encode("utf-8"), "application/json")

    @staticmethod
    def _respond(handler: BaseHTTPRequestHandler, status: int, body: bytes,
                 content_type: str = "text/plain") -> None:
        handler.send_response(status)
        handler.send_header("Content-Type", f"{content_type}; charset=utf-8")
        handler.send_header("Content-Length", str(len(body)))
        handler.end_headers()
        handler.wfile.write(body)


# -- stub generators ---------------------------------------------------------


class EchoGenerator:
    """Cites the first evidence document; used for offline smoke runs."""

    def __init__(self, max_output_tokens: int = 1500):
        self.max_output_tokens = max_output_tokens

    def _first_evidence_ada(self, prompt: str) -> str | None:
        for line in prompt.splitlines():
            if line.startswith("[ADA: ") and line.endswith("]"):
                return line[len("[ADA: ") : -1]
        return None

    def _truncate(self, text: str) -> str:
        words = text.split()
        return " ".join(words[: self.max_output_tokens])

    def generate(self, prompt: str) -> Iterator[str]:
        ada = self._first_evidence_ada(prompt)
        if ada is None:
            yield self._truncate("Δεν βρέθηκαν σχετικές αποφάσεις.")
        else:
            yield self._truncate(f"Σχετική απόφαση: {ada}")

    def generate_structured(self, prompt: str) -> StructuredAnswer:
        ada = self._first_evidence_ada(prompt)
        if ada is None:
            return StructuredAnswer(
                concise_answer="Δεν βρέθηκαν σχετικές αποφάσεις.",
                detailed_explanation="Η αναζήτηση δεν επέστρεψε τεκμήρια.",
                citations=(),
            )
        return StructuredAnswer(
            concise_answer=f"Σχετική απόφαση: {ada}",
            detailed_explanation=f"Η απάντηση βασίζεται στην απόφαση {ada}.",
            citations=(ada,),
        )


class ScriptedGenerator:
    """Returns a fixed text (or per-call texts); handy for replay-style tests."""

    def __init__(self, text: str = "", texts: list[str] | None = None,
                 max_output_tokens: int = 1500):
        self.text = text
        self.texts = list(texts) if texts is not None else None
        self.max_output_tokens = max_output_tokens

    def _next(self) -> str:
        if self.texts is not None and self.texts:
            return self.texts.pop(0)
        return self.text

    def generate(self, prompt: str) -> Iterator[str]:
        yield self._next()

    def generate_structured(self, prompt: str) -> StructuredAnswer:
        text = self._next()
        return StructuredAnswer(
            concise_answer=text,
            detailed_explanation=text,
            citations=tuple(extract_ada_citations(text)),
        )


# -- synthetic corpora -------------------------------------------------------


def random_ada(rng: random.Random) -> str:
    prefix = "".join(rng.choice(GREEK_ALPHABET) for _ in range(10))
    suffix = "".join(rng.choice(GREEK_ALPHABET) for _ in range(3))
    return f"{prefix}-{suffix}"


def synthetic_record(ada: str, subject: str = "", org_id: str = "ORG-1",
                     org_name: str | None = None, issue_date: int = 1_609_459_200_000,
                     extra: dict | None = None) -> DecisionRecord:
    return DecisionRecord(
        ada=ada,
        protocol_number=f"ΠΡ/{ada[:4]}",
        subject=subject or f"Θέμα της απόφασης {ada}",
        issue_date=issue_date,
        decision_type_id="Β.1.3",
        organization_id=org_id,
        organization_name=org_name,
        unit_ids=("ΜΟΝ-1",),
        signer_ids=("ΥΠ-1",),
        extra_field_values=extra or {},
        submission_timestamp=issue_date + 3_600_000,
        status="PUBLISHED",
        version_id="1.0",
    )


_GREEK_WORDS = (
    "απόφαση έγκριση δαπάνη ανάθεση σύμβαση προμήθεια υπηρεσία έργο μελέτη "
    "φορέας διεύθυνση τμήμα προϋπολογισμός πίστωση ποσό ευρώ διαγωνισμός "
    "πρακτικό συνεδρίαση θέμα άρθρο νόμος διάταξη κανονισμός εγκύκλιος "
    "αρμοδιότητα υπογραφή ορισμός επιτροπή μέλος πρόεδρος γραμματέας"
).split()


def synthetic_body(rng: random.Random, n_sentences: int = 5) -> str:
    sentences = []
    for _ in range(n_sentences):
        n = rng.randint(4, 12)
        sentences.append(" ".join(rng.choice(_GREEK_WORDS) for _ in range(n)) + ".")
    return "\n".join(sentences)


def build_synthetic_corpus(root: Path, n_docs: int, seed: int = 0,
                           n_orgs: int = 5) -> CorpusLayout:
    """Plain synthetic corpus: random Greek-ish bodies, a few organizations."""
    rng = random.Random(seed)
    layout = CorpusLayout(root=Path(root))
    for i in range(n_docs):
        ada = random_ada(rng)
        org = f"ORG-{i % n_orgs}"
        record = synthetic_record(ada, org_id=org, org_name=f"Φορέας {org}")
        store_document(layout, StoredDocument(record=record, body_markdown=synthetic_body(rng)))
    return layout


@dataclass
class TemplateCorpus:
    """Template-generated pair corpus with exact ground truth."""

    layout: CorpusLayout
    pairs: list[DocPair]
    texts: dict[str, str] = field(default_factory=dict)
    truth: dict[str, Segmentation] = field(default_factory=dict)
    bp_fraction: dict[str, float] = field(default_factory=dict)


def _interleave_template(
    rng: random.Random, skeleton_segments: list[list[str]], content_prefix: str,
    content_len: tuple[int, int],
) -> tuple[list[str], Segmentation]:
    """Skeleton segments alternated with fresh unique content words."""
    words: list[str] = []
    spans: list[Span] = []
    content_counter = 0
    for i, segment in enumerate(skeleton_segments):
        start = len(words)
        words.extend(segment)
        spans.append(Span(label=BOILERPLATE, start=start, end=len(words)))
        if i < len(skeleton_segments) - 1:
            start = len(words)
            for _ in range(rng.randint(*content_len)):
                words.append(f"{content_prefix}περιεχομενο{content_counter}")
                content_counter += 1
            spans.append(Span(label=CONTENT, start=start, end=len(words)))
    return words, Segmentation(ada="", spans=tuple(spans))


def build_template_pair_corpus(
    root: Path,
    n_pairs: int,
    seed: int = 0,
    n_skeleton_segments: int = 4,
    skeleton_len: tuple[int, int] = (4, 9),
    content_len: tuple[int, int] = (3, 8),
) -> TemplateCorpus:
    """Pairs generated by interleaving a shared skeleton with unique contents.

    Skeleton words are unique per position and content vocabularies are
    disjoint across documents, so the LCS of a pair is exactly the skeleton
    and a perfect segmenter recovers the injected truth.
    """
    rng = random.Random(seed)
    layout = CorpusLayout(root=Path(root))
    corpus = TemplateCorpus(layout=layout, pairs=[])
    for p in range(n_pairs):
        segments = []
        token = 0
        for _ in range(n_skeleton_segments):
            length = rng.randint(*skeleton_len)
            segments.append([f"π{p}σκελετος{token + j}" for j in range(length)])
            token += length
        adas = []
        for side in ("α", "β"):
            ada = random_ada(rng)
            words, seg = _interleave_template(rng, segments, f"{side}{p}", content_len)
            text = " ".join(words)
            record = synthetic_record(ada, subject=f"Ζεύγος {p}{side}")
            store_document(layout, StoredDocument(record=record, body_markdown=text))
            corpus.texts[ada] = text
            corpus.truth[ada] = Segmentation(ada=ada, spans=seg.spans)
            corpus.bp_fraction[ada] = len(seg.bp_indices()) / len(words)
            adas.append(ada)
        corpus.pairs.append(DocPair(pair_id=f"pair-{p}", ada_a=adas[0], ada_b=adas[1]))
    return corpus


def build_single_template_corpus(root: Path, n_docs: int, seed: int = 0) -> TemplateCorpus:
    """Every document generated from one shared skeleton (>= 60% boilerplate)."""
    rng = random.Random(seed)
    layout = CorpusLayout(root=Path(root))
    corpus = TemplateCorpus(layout=layout, pairs=[])
    segments = []
    token = 0
    for _ in range(5):
        segments.append([f"κοινοςσκελετος{token + j}" for j in range(8)])
        token += 8
    for d in range(n_docs):
        ada = random_ada(rng)
        words, seg = _interleave_template(rng, segments, f"δ{d}", (2, 4))
        text = " ".join(words)
        record = synthetic_record(ada, subject=f"Πρότυπο έγγραφο {d}")
        store_document(layout, StoredDocument(record=record, body_markdown=text))
        corpus.texts[ada] = text
        corpus.truth[ada] = Segmentation(ada=ada, spans=seg.spans)
        corpus.bp_fraction[ada] = len(seg.bp_indices()) / len(words)
    return corpus


def build_unrelated_corpus(root: Path, n_docs: int, seed: int = 0) -> TemplateCorpus:
    """Documents with pairwise-disjoint vocabularies (no shared template)."""
    rng = random.Random(seed)
    layout = CorpusLayout(root=Path(root))
    corpus = TemplateCorpus(layout=layout, pairs=[])
    for d in range(n_docs):
        ada = random_ada(rng)
        words = [f"μοναδικο{d}λεξη{j}" for j in range(rng.randint(30, 60))]
        text = " ".join(words)
        record = synthetic_record(ada, subject=f"Ανεξάρτητο έγγραφο {d}")
        store_document(layout, StoredDocument(record=record, body_markdown=text))
        corpus.texts[ada] = text
    return corpus
