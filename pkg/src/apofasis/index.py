"""Greek-analyzed inverted index with BM25 ranking.

Documents are indexed over a single "content" field: the rendered metadata
header, a blank line, then the Markdown body. The index lives in memory and
snapshots to a small versioned binary format (little-endian u32 lengths,
UTF-8 strings):

    magic b"APIX" | u32 version=1 | f64 k1 | f64 b | u32 n_docs
    per doc: str ada | u32 token_length | str stored_content
             | u32 n_terms | (str term, u32 tf) * n_terms

Postings and document frequencies are rebuilt on load. Strings are encoded
as u32 byte length + UTF-8 bytes.
"""

from __future__ import annotations

import math
import re
import struct
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from apofasis.corpus import StoredDocument, render_metadata_header

SNAPSHOT_MAGIC = b"APIX"
SNAPSHOT_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
EXCERPT_CHARS = 2000

_WORD_RE = re.compile(r"\w+", re.UNICODE)


class EmptyIndex(RuntimeError):
    """Search was attempted against an index with no documents."""


def _load_wordlist(name: str) -> list[str]:
    text = resources.files("apofasis.data").joinpath(name).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


GREEK_STOPWORDS = frozenset(_load_wordlist("greek_stopwords.txt"))
# Longest-first so e.g. "ικων" wins over "ων".
GREEK_SUFFIXES = sorted(_load_wordlist("greek_suffixes.txt"), key=len, reverse=True)
_MIN_STEM = 4


def fold_token(token: str) -> str:
    """Lowercase, strip combining accents (tonos/dialytika), normalize final sigma."""
    lowered = token.lower().replace("ς", "σ")  # ς -> σ
    decomposed = unicodedata.normalize("NFD", lowered)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return unicodedata.normalize("NFC", stripped)


def light_stem(token: str) -> str:
    """Strip documented suffixes until stable; stems never drop below 4 chars."""
    while len(token) > _MIN_STEM:
        for suffix in GREEK_SUFFIXES:
            if token.endswith(suffix) and len(token) - len(suffix) >= _MIN_STEM:
                token = token[: -len(suffix)]
                break
        else:
            return token
    return token


def analyze_greek(text: str, stem: bool = True) -> list[str]:
    """Tokenize, fold, drop stopwords, and (optionally) light-stem.

    Stopwords are filtered both before and after stemming so the analyzer is
    idempotent: analyze(" ".join(analyze(x))) == analyze(x).
    """
    out = []
    for raw in _WORD_RE.findall(text):
        token = fold_token(raw)
        if not token or token in GREEK_STOPWORDS:
            continue
        if stem:
            token = light_stem(token)
            if not token or token in GREEK_STOPWORDS:
                continue
        out.append(token)
    return out


@dataclass(frozen=True)
class SearchHit:
    ada: str
    score: float
    excerpt: str


@dataclass(frozen=True)
class IndexStats:
    n_docs: int
    avg_doc_len: float
    df: dict[str, int]


@dataclass
class _DocEntry:
    term_freqs: Counter
    length: int
    stored_content: str


@dataclass
class SearchIndex:
    """In-memory inverted index; single writer, then any number of readers."""

    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    _docs: dict[str, _DocEntry] = field(default_factory=dict)
    _postings: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def n_docs(self) -> int:
        return len(self._docs)

    def index_content(self, ada: str, content: str) -> None:
        """Analyze and (up)sert one document under its ADA."""
        if ada in self._docs:
            self._remove(ada)
        terms = Counter(analyze_greek(content))
        self._docs[ada] = _DocEntry(
            term_freqs=terms,
            length=sum(terms.values()),
            stored_content=content,
        )
        for term, tf in terms.items():
            self._postings.setdefault(term, {})[ada] = tf

    def index_document(self, doc: StoredDocument) -> None:
        content = render_metadata_header(doc.record) + "\n\n" + doc.body_markdown
        self.index_content(doc.record.ada, content)

    def _remove(self, ada: str) -> None:
        entry = self._docs.pop(ada)
        for term in entry.term_freqs:
            postings = self._postings.get(term)
            if postings is not None:
                postings.pop(ada, None)
                if not postings:
                    del self._postings[term]

    def stats(self) -> IndexStats:
        n = self.n_docs
        avg = sum(e.length for e in self._docs.values()) / n if n else 0.0
        return IndexStats(
            n_docs=n,
            avg_doc_len=avg,
            df={term: len(postings) for term, postings in self._postings.items()},
        )

    def stored_content(self, ada: str) -> str:
        return self._docs[ada].stored_content

    def search(self, query: str, k: int = 8) -> list[SearchHit]:
        """Top-k by BM25; ties broken by ADA ascending.

        Each occurrence of a term in the analyzed query contributes one
        summand (multiset semantics).
        """
        if not self._docs:
            raise EmptyIndex("no documents indexed")
        if k < 1:
            raise ValueError("k must be >= 1")
        terms = analyze_greek(query)
        if not terms:
            return []
        n = self.n_docs
        avgdl = sum(e.length for e in self._docs.values()) / n
        scores: dict[str, float] = {}
        for term in terms:
            postings = self._postings.get(term)
            if not postings:
                continue
            df = len(postings)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            for ada, tf in postings.items():
                length = self._docs[ada].length
                norm = self.k1 * (1.0 - self.b + self.b * (length / avgdl if avgdl else 0.0))
                scores[ada] = scores.get(ada, 0.0) + idf * (tf * (self.k1 + 1.0)) / (tf + norm)
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        return [
            SearchHit(ada=ada, score=score, excerpt=self._docs[ada].stored_content[:EXCERPT_CHARS])
            for ada, score in ranked
        ]

    # -- snapshot ----------------------------------------------------------

    def save(self, path: Path | str) -> None:
        parts = [SNAPSHOT_MAGIC, struct.pack("<I", SNAPSHOT_VERSION)]
        parts.append(struct.pack("<dd", self.k1, self.b))
        parts.append(struct.pack("<I", len(self._docs)))
        for ada in sorted(self._docs):
            entry = self._docs[ada]
            parts.append(_pack_str(ada))
            parts.append(struct.pack("<I", entry.length))
            parts.append(_pack_str(entry.stored_content))
            parts.append(struct.pack("<I", len(entry.term_freqs)))
            for term in sorted(entry.term_freqs):
                parts.append(_pack_str(term))
                parts.append(struct.pack("<I", entry.term_freqs[term]))
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: Path | str) -> "SearchIndex":
        buf = Path(path).read_bytes()
        if buf[:4] != SNAPSHOT_MAGIC:
            raise ValueError("not an index snapshot")
        offset = 4
        (version,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        k1, b = struct.unpack_from("<dd", buf, offset)
        offset += 16
        (n_docs,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        index = cls(k1=k1, b=b)
        for _ in range(n_docs):
            ada, offset = _unpack_str(buf, offset)
            (length,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            content, offset = _unpack_str(buf, offset)
            (n_terms,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            freqs = Counter()
            for _ in range(n_terms):
                term, offset = _unpack_str(buf, offset)
                (tf,) = struct.unpack_from("<I", buf, offset)
                offset += 4
                freqs[term] = tf
            index._docs[ada] = _DocEntry(term_freqs=freqs, length=length, stored_content=content)
            for term, tf in freqs.items():
                index._postings.setdefault(term, {})[ada] = tf
        return index


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _unpack_str(buf: bytes, offset: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    return buf[offset : offset + length].decode("utf-8"), offset + length
