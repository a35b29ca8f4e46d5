"""Boilerplate segmentation over embedding neighborhoods, plus its evaluation.

A segmentation partitions a document's word sequence into alternating
BOILERPLATE/CONTENT spans. The deterministic baseline segmenter votes with
LCS alignments against the document's neighbors; model-backed segmenters and
classifiers plug in behind the same ports. The evaluation swaps content
between template-sharing pairs and measures normalized word-level edit
distance of each reconstruction against its counterpart.

Interchange format: {"ada": ..., "spans": [{"label": "BP"|"CT", "start": s, "end": e}]}.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from apofasis import _kernels
from apofasis.embedding import VectorStore, centroid_document, kmeans, knn

BOILERPLATE = "BP"
CONTENT = "CT"


class SegmentationMismatch(ValueError):
    """Segmentation bounds disagree with the document's word count."""


def tokenize_words(text: str) -> list[str]:
    """Whitespace-delimited words, runs of whitespace collapsed."""
    return text.split()


@dataclass(frozen=True)
class Span:
    label: str
    start: int
    end: int


@dataclass(frozen=True)
class Segmentation:
    """Ordered labeled spans partitioning [0, word_count)."""

    ada: str
    spans: tuple[Span, ...]

    def word_count(self) -> int:
        return self.spans[-1].end if self.spans else 0

    def validate(self, word_count: int | None = None) -> None:
        expected = 0
        previous_label = None
        for span in self.spans:
            if span.label not in (BOILERPLATE, CONTENT):
                raise SegmentationMismatch(f"unknown label {span.label!r}")
            if span.start != expected or span.end <= span.start:
                raise SegmentationMismatch(f"span {span} breaks the partition")
            if span.label == previous_label:
                raise SegmentationMismatch("adjacent spans share a label")
            expected = span.end
            previous_label = span.label
        if word_count is not None and expected != word_count:
            raise SegmentationMismatch(f"spans cover {expected} words, document has {word_count}")

    def bp_indices(self) -> set[int]:
        out: set[int] = set()
        for span in self.spans:
            if span.label == BOILERPLATE:
                out.update(range(span.start, span.end))
        return out

    def to_json(self) -> dict:
        return {
            "ada": self.ada,
            "spans": [{"label": s.label, "start": s.start, "end": s.end} for s in self.spans],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Segmentation":
        spans = tuple(
            Span(label=str(s["label"]), start=int(s["start"]), end=int(s["end"]))
            for s in doc["spans"]
        )
        seg = cls(ada=str(doc.get("ada", "")), spans=spans)
        seg.validate()
        return seg


def spans_from_labels(ada: str, labels: Sequence[int]) -> Segmentation:
    """Merge a per-word 0/1 label sequence (1 = boilerplate) into maximal spans."""
    spans: list[Span] = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or bool(labels[i]) != bool(labels[start]):
            spans.append(
                Span(label=BOILERPLATE if labels[start] else CONTENT, start=start, end=i)
            )
            start = i
    return Segmentation(ada=ada, spans=tuple(spans))


class SegmenterPort(Protocol):
    name: str

    def segment(self, text: str, neighbors: Sequence[str], ada: str = "") -> Segmentation: ...


class ClassifierPort(Protocol):
    def classify(self, text: str, neighbors: Sequence[str]) -> float: ...


def _smooth_runs(labels: list[int], min_run: int) -> list[int]:
    """Flip runs shorter than min_run to the surrounding label.

    Shortest runs are flipped first; among equal lengths, boilerplate runs go
    before content runs (so ties favor CONTENT), then leftmost. A run covering
    the whole document has no surrounding label and becomes CONTENT when short.
    """
    if not labels or min_run <= 1:
        return labels
    while True:
        runs: list[list[int]] = []  # [label, start, end]
        start = 0
        for i in range(1, len(labels) + 1):
            if i == len(labels) or labels[i] != labels[start]:
                runs.append([labels[start], start, i])
                start = i
        if len(runs) == 1:
            if runs[0][2] - runs[0][1] < min_run:
                return [0] * len(labels)
            return labels
        short = [
            (end - begin, 0 if label == 1 else 1, begin, idx)
            for idx, (label, begin, end) in enumerate(runs)
            if end - begin < min_run
        ]
        if not short:
            return labels
        _, _, _, idx = min(short)
        label, begin, end = runs[idx]
        neighbor = runs[idx - 1][0] if idx > 0 else runs[idx + 1][0]
        for i in range(begin, end):
            labels[i] = neighbor


def baseline_segment(
    text: str,
    neighbors: Sequence[str],
    m_frac: float = 0.5,
    min_run: int = 3,
    ada: str = "",
) -> Segmentation:
    """Deterministic multi-neighbor LCS-voting segmenter.

    A word is boilerplate iff it sits on an LCS alignment with at least
    ceil(m_frac * len(neighbors)) neighbors; short runs are then smoothed away.
    """
    if not neighbors:
        raise ValueError("at least one neighbor is required")
    if not 0.0 < m_frac <= 1.0:
        raise ValueError("m_frac must be in (0, 1]")
    words = tokenize_words(text)
    if not words:
        return Segmentation(ada=ada, spans=())
    votes = [0] * len(words)
    for neighbor in neighbors:
        flags = _kernels.lcs_member_flags(words, tokenize_words(neighbor))
        for i, flag in enumerate(flags):
            votes[i] += flag
    threshold = math.ceil(m_frac * len(neighbors))
    labels = [1 if v >= threshold else 0 for v in votes]
    labels = _smooth_runs(labels, min_run)
    return spans_from_labels(ada, labels)


class BaselineSegmenter:
    """SegmenterPort wrapper around `baseline_segment`."""

    def __init__(self, m_frac: float = 0.5, min_run: int = 3):
        self.m_frac = m_frac
        self.min_run = min_run
        self.name = f"baseline-lcs(m_frac={m_frac},min_run={min_run})"

    def segment(self, text: str, neighbors: Sequence[str], ada: str = "") -> Segmentation:
        return baseline_segment(text, neighbors, self.m_frac, self.min_run, ada=ada)


class BaselineClassifier:
    """Template likelihood = boilerplate word fraction under the baseline segmenter."""

    def __init__(self, m_frac: float = 0.5, min_run: int = 3):
        self._segmenter = BaselineSegmenter(m_frac, min_run)

    def classify(self, text: str, neighbors: Sequence[str]) -> float:
        words = tokenize_words(text)
        if not words:
            return 0.0
        seg = self._segmenter.segment(text, neighbors)
        return len(seg.bp_indices()) / len(words)


def extract_parts(text: str, seg: Segmentation) -> tuple[list[str], list[str]]:
    """(boilerplate span texts, content span texts), in document order.

    Interleaving the two lists in the segmentation's span order reconstructs
    the document's word sequence exactly.
    """
    words = tokenize_words(text)
    seg.validate(len(words))
    skeleton: list[str] = []
    contents: list[str] = []
    for span in seg.spans:
        chunk = " ".join(words[span.start : span.end])
        (skeleton if span.label == BOILERPLATE else contents).append(chunk)
    return skeleton, contents


def _rebuild_with_contents(text: str, seg: Segmentation, donor_contents: list[str]) -> str:
    """Fill the segmentation's content slots, in order, from donor contents.

    Surplus donor contents are concatenated into the final slot; slots without
    a donor become empty. With no content slot at all, donors are dropped.
    """
    words = tokenize_words(text)
    seg.validate(len(words))
    n_slots = sum(1 for s in seg.spans if s.label == CONTENT)
    out: list[str] = []
    slot = 0
    for span in seg.spans:
        if span.label == BOILERPLATE:
            out.extend(words[span.start : span.end])
        else:
            if slot == n_slots - 1 and len(donor_contents) > n_slots:
                out.extend(" ".join(donor_contents[slot:]).split())
            elif slot < len(donor_contents):
                out.extend(donor_contents[slot].split())
            slot += 1
    return " ".join(out)


def swap_reconstruct(
    text_a: str, seg_a: Segmentation, text_b: str, seg_b: Segmentation
) -> tuple[str, str]:
    """Cross-substitute content between two segmented documents.

    Returns (A', B'): A's boilerplate skeleton carrying B's contents and the
    symmetric counterpart.
    """
    _, contents_a = extract_parts(text_a, seg_a)
    _, contents_b = extract_parts(text_b, seg_b)
    a_prime = _rebuild_with_contents(text_a, seg_a, contents_b)
    b_prime = _rebuild_with_contents(text_b, seg_b, contents_a)
    return a_prime, b_prime


def reconstruction_error(x: str, y: str) -> float:
    """Word-level Levenshtein distance normalized by the longer word count."""
    xw = tokenize_words(x)
    yw = tokenize_words(y)
    longest = max(len(xw), len(yw))
    if longest == 0:
        return 0.0
    return _kernels.levenshtein_words(xw, yw) / longest


def boilerplate_extraction_rate(
    predicted: Segmentation, truth: Segmentation
) -> tuple[float, float]:
    """(rate over all words, rate over true boilerplate words).

    The first uses the document's total word count as denominator; the second
    normalizes by the true boilerplate count (1.0 when there is none).
    """
    total = predicted.word_count()
    if total != truth.word_count():
        raise SegmentationMismatch(
            f"word counts differ: {total} vs {truth.word_count()}"
        )
    if total == 0:
        return 0.0, 1.0
    correct = len(predicted.bp_indices() & truth.bp_indices())
    true_bp = len(truth.bp_indices())
    over_truth = correct / true_bp if true_bp else 1.0
    return correct / total, over_truth


@dataclass(frozen=True)
class DocPair:
    pair_id: str
    ada_a: str
    ada_b: str

    @classmethod
    def from_json(cls, doc: Mapping) -> "DocPair":
        return cls(pair_id=str(doc["pair_id"]), ada_a=str(doc["ada_a"]), ada_b=str(doc["ada_b"]))


def read_pairs(path: Path | str) -> list[DocPair]:
    """JSON-lines pair file: one {"pair_id", "ada_a", "ada_b"} object per line."""
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            pairs.append(DocPair.from_json(json.loads(line)))
    return pairs


@dataclass(frozen=True)
class SwapEvalResult:
    pair_id: str
    re_ab: float
    re_ba: float
    ber_a: float | None = None
    ber_b: float | None = None


@dataclass
class SwapEvalReport:
    segmenter: str
    results: list[SwapEvalResult] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)

    def _re_values(self) -> list[float]:
        return [v for r in self.results for v in (r.re_ab, r.re_ba)]

    def _ber_values(self) -> list[float]:
        return [v for r in self.results for v in (r.ber_a, r.ber_b) if v is not None]

    @staticmethod
    def _mean_std(values: list[float]) -> tuple[float, float]:
        if not values:
            return 0.0, 0.0
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return mean, math.sqrt(var)

    def summary(self) -> dict:
        re_mean, re_std = self._mean_std(self._re_values())
        ber_values = self._ber_values()
        out = {
            "segmenter": self.segmenter,
            "pairs": len(self.results),
            "failures": len(self.failures),
            "re_mean": re_mean,
            "re_std": re_std,
            "re_display": f"{re_mean:.4f} ± {re_std:.4f}",
        }
        if ber_values:
            ber_mean, ber_std = self._mean_std(ber_values)
            out["ber_mean"] = ber_mean
            out["ber_std"] = ber_std
            out["ber_display"] = f"{100 * ber_mean:.2f} ± {100 * ber_std:.2f}"
        return out


def run_swap_evaluation(
    pairs: Iterable[DocPair],
    texts: Mapping[str, str] | Callable[[str], str],
    segmenter: SegmenterPort,
    truth: Mapping[str, Segmentation] | None = None,
) -> SwapEvalReport:
    """Segment both members of each pair, swap contents, and score.

    re_ab compares A rebuilt with B's content against B (and symmetrically).
    Extraction rates are filled in only when ground-truth segmentations are
    supplied. Per-pair failures are recorded and excluded from aggregates.
    """
    get_text = texts.__getitem__ if isinstance(texts, Mapping) else texts
    report = SwapEvalReport(segmenter=getattr(segmenter, "name", segmenter.__class__.__name__))
    for pair in pairs:
        try:
            text_a = get_text(pair.ada_a)
            text_b = get_text(pair.ada_b)
            seg_a = segmenter.segment(text_a, [text_b], ada=pair.ada_a)
            seg_b = segmenter.segment(text_b, [text_a], ada=pair.ada_b)
            a_prime, b_prime = swap_reconstruct(text_a, seg_a, text_b, seg_b)
            ber_a = ber_b = None
            if truth is not None and pair.ada_a in truth and pair.ada_b in truth:
                ber_a = boilerplate_extraction_rate(seg_a, truth[pair.ada_a])[0]
                ber_b = boilerplate_extraction_rate(seg_b, truth[pair.ada_b])[0]
            report.results.append(
                SwapEvalResult(
                    pair_id=pair.pair_id,
                    re_ab=reconstruction_error(a_prime, text_b),
                    re_ba=reconstruction_error(b_prime, text_a),
                    ber_a=ber_a,
                    ber_b=ber_b,
                )
            )
        except Exception as exc:
            report.failures.append((pair.pair_id, f"{type(exc).__name__}: {exc}"))
    return report


def prevalence_study(
    store: VectorStore,
    texts: Mapping[str, str] | Callable[[str], str],
    k_list: Sequence[int],
    classifier: ClassifierPort,
    n_neighbors: int = 10,
    seed: int = 0,
    threshold: float = 0.5,
    csv_path: Path | str | None = None,
) -> dict[int, float]:
    """Fraction of cluster centroids classified as template-derived, per k.

    For each k: cluster the store, take every centroid document plus its
    top-N nearest neighbors, and classify. A per-centroid CSV is written when
    `csv_path` is given, supporting downstream manual inspection.
    """
    get_text = texts.__getitem__ if isinstance(texts, Mapping) else texts
    rates: dict[int, float] = {}
    rows: list[dict] = []
    for k in k_list:
        assignment = kmeans(store, k, seed=seed)
        flagged = 0
        scored = 0
        for cluster in range(k):
            try:
                center_ada = centroid_document(assignment, cluster, store)
                neighbor_hits = knn(store, store.get(center_ada), n_neighbors + 1)
                neighbor_adas = [a for a, _ in neighbor_hits if a != center_ada][:n_neighbors]
                likelihood = classifier.classify(
                    get_text(center_ada), [get_text(a) for a in neighbor_adas]
                )
            except Exception as exc:
                rows.append(
                    {"k": k, "cluster": cluster, "ada": "", "likelihood": "", "flagged": "",
                     "error": f"{type(exc).__name__}: {exc}"}
                )
                continue
            scored += 1
            is_template = likelihood >= threshold
            flagged += int(is_template)
            rows.append(
                {"k": k, "cluster": cluster, "ada": center_ada,
                 "likelihood": f"{likelihood:.4f}", "flagged": int(is_template), "error": ""}
            )
        rates[k] = flagged / scored if scored else 0.0
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["k", "cluster", "ada", "likelihood", "flagged", "error"]
            )
            writer.writeheader()
            writer.writerows(rows)
    return rates
