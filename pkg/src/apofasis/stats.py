"""Parallel corpus statistics: token/character/sentence metrics and org counts.

The map over documents is embarrassingly parallel; the reduce sorts per-doc
results by ADA first, so the output is identical for any worker count.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Sequence

from apofasis.corpus import CorpusLayout, load_document

# Reference tokenizer: Unicode word/punctuation splitter. Deterministic and
# dependency-free; a subword tokenizer can be plugged in through the same port.
_WORD_OR_PUNCT_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

# Sentence terminators; the Greek question mark is the semicolon character.
_SENTENCE_SPLIT_RE = re.compile(r"[.!?;]")

TokenizerPort = Callable[[str], Sequence]


def reference_tokenize(text: str) -> list[str]:
    """Split into word and punctuation tokens (whitespace discarded)."""
    return _WORD_OR_PUNCT_RE.findall(text)


def count_tokens(text: str, tokenizer: TokenizerPort = reference_tokenize) -> int:
    return len(tokenizer(text))


def estimate_sentences(text: str) -> int:
    """Rough sentence count: non-blank segments between terminators.

    Deliberately naive about abbreviations; this is an estimate, not parsing.
    """
    return sum(1 for seg in _SENTENCE_SPLIT_RE.split(text) if seg.strip())


@dataclass(frozen=True)
class DocStats:
    ada: str
    tokens: int
    characters: int
    sentences: int


@dataclass
class CorpusStats:
    n_docs: int = 0
    total_tokens: int = 0
    mean_tokens: float = 0.0
    median_tokens: int = 0
    std_tokens: float = 0.0
    max_tokens: int = 0
    total_chars: int = 0
    mean_chars: float = 0.0
    total_sentences: int = 0
    mean_sentences: float = 0.0
    org_histogram: dict[str, int] = field(default_factory=dict)
    # Extras beyond the core metric set: raw vs distinct counts and read errors,
    # so dedup questions can be answered from the report itself.
    n_unique_adas: int = 0
    read_errors: int = 0

    def to_json(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "total_tokens": self.total_tokens,
            "mean_tokens": self.mean_tokens,
            "median_tokens": self.median_tokens,
            "std_tokens": self.std_tokens,
            "max_tokens": self.max_tokens,
            "total_chars": self.total_chars,
            "mean_chars": self.mean_chars,
            "total_sentences": self.total_sentences,
            "mean_sentences": self.mean_sentences,
            "org_histogram": dict(sorted(self.org_histogram.items())),
            "n_unique_adas": self.n_unique_adas,
            "read_errors": self.read_errors,
        }


def doc_stats(ada: str, text: str, tokenizer: TokenizerPort = reference_tokenize) -> DocStats:
    return DocStats(
        ada=ada,
        tokens=count_tokens(text, tokenizer),
        characters=len(text),
        sentences=estimate_sentences(text),
    )


_READ_CHUNK = 1 << 20


def _read_bytes(path: str) -> bytes:
    # Raw fd reads keep it to 3 syscalls per file; buffered open() costs ~5,
    # which dominates per-doc time on slow filesystems.
    fd = os.open(path, os.O_RDONLY)
    try:
        data = os.read(fd, _READ_CHUNK)
        if len(data) == _READ_CHUNK:
            parts = [data]
            while chunk := os.read(fd, _READ_CHUNK):
                parts.append(chunk)
            data = b"".join(parts)
        return data
    finally:
        os.close(fd)


def _doc_stats_for_path(json_path: str) -> tuple | None:
    """(DocStats, org_key) for one metadata path; None marks a read error."""
    try:
        meta = json.loads(_read_bytes(json_path))
        try:
            body = _read_bytes(json_path[:-5] + ".md").decode("utf-8")
        except FileNotFoundError:
            body = ""
        org = str(meta.get("organizationName") or meta.get("organizationId") or "")
        return doc_stats(str(meta["ada"]), body), org
    except Exception:
        return None


def _stats_for_paths(paths: list[str]) -> list[tuple | None]:
    return [_doc_stats_for_path(p) for p in paths]


def _chunked(items: list, n_chunks: int) -> list[list]:
    size = max(1, math.ceil(len(items) / n_chunks))
    return [items[i : i + size] for i in range(0, len(items), size)]


def compute_corpus_stats(layout: CorpusLayout, workers: int = 1) -> CorpusStats:
    """Aggregate corpus statistics; result is independent of `workers`.

    Per-file read errors are counted, not fatal. Median is the exact lower
    median of the sorted token counts; std is the population deviation.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    paths = sorted(str(p) for p in layout.root.glob("*/*.json")) if layout.root.is_dir() else []
    if workers == 1 or len(paths) < 2 * workers:
        results = _stats_for_paths(paths)
    else:
        batches = _chunked(paths, workers * 4)
        with Pool(workers) as pool:
            results = [r for batch in pool.map(_stats_for_paths, batches) for r in batch]

    stats = CorpusStats()
    per_doc: list[tuple[DocStats, str]] = []
    for item in results:
        if item is None:
            stats.read_errors += 1
        else:
            per_doc.append(item)
    per_doc.sort(key=lambda pair: pair[0].ada)

    stats.n_docs = len(per_doc)
    stats.n_unique_adas = len({d.ada for d, _ in per_doc})
    if not per_doc:
        return stats

    token_counts = [d.tokens for d, _ in per_doc]
    stats.total_tokens = sum(token_counts)
    stats.mean_tokens = stats.total_tokens / stats.n_docs
    stats.median_tokens = sorted(token_counts)[(stats.n_docs - 1) // 2]
    sq = sum((t - stats.mean_tokens) ** 2 for t in token_counts)
    stats.std_tokens = math.sqrt(sq / stats.n_docs)
    stats.max_tokens = max(token_counts)

    stats.total_chars = sum(d.characters for d, _ in per_doc)
    stats.mean_chars = stats.total_chars / stats.n_docs
    stats.total_sentences = sum(d.sentences for d, _ in per_doc)
    stats.mean_sentences = stats.total_sentences / stats.n_docs

    for _, org in per_doc:
        if org:
            stats.org_histogram[org] = stats.org_histogram.get(org, 0) + 1
    return stats


def top_organizations(stats: CorpusStats, n: int) -> list[tuple[str, int]]:
    """Organizations by descending doc count; ties broken by id, ascending."""
    if n < 0:
        raise ValueError("n must be >= 0")
    ranked = sorted(stats.org_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:n]
