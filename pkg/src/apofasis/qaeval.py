"""Two-track QA evaluation: automated scoring of generated QA pairs, and the
manual multi-document aggregation protocol (fixture schema + scorer).

Automated scores per pair: embedding cosine ("semantic"), TF-IDF cosine over
the Greek analyzer, and multiset overlap of extracted monetary amounts. A
pair counts as equivalent when the semantic score reaches the threshold.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from apofasis.corpus import CorpusLayout, load_document, validate_ada
from apofasis.embedding import EncoderPort
from apofasis.index import IndexStats, analyze_greek
from apofasis.rag import GeneratorPort

EQUIVALENCE_THRESHOLD = 70.0

FULL = "FULL"
PARTIAL = "PARTIAL"
INCORRECT = "INCORRECT"
MANUAL_QUESTION_KEYS = ("count_list", "total_amount", "signers", "topics")

REPORT_LABELS = (
    "Total Comparisons",
    "Semantically Equivalent (≥ 70%)",
    "Not Equivalent (< 70%)",
    "Average Semantic Score",
    "Average TF-IDF Similarity",
    "Average Amount Match",
)

# Greek money format: '.' groups thousands, ',' starts the two decimal digits.
# Plain unseparated numbers are deliberately not matched.
_AMOUNT_RE = re.compile(r"(?<![\d.,])\d{1,3}(?:\.\d{3})*,\d{2}(?!\d)")

QA_PROMPT_V1 = (
    "Διάβασε το παρακάτω διοικητικό έγγραφο και γράψε μία συγκεκριμένη ερώτηση "
    "πάνω στο περιεχόμενό του μαζί με την τεκμηριωμένη απάντηση. Απάντησε ΜΟΝΟ "
    'με JSON: {"question": "...", "answer": "..."}\n\nΕΓΓΡΑΦΟ:\n{document}'
)


class InvalidSample(ValueError):
    """Requested sample exceeds the corpus size."""


class MalformedResult(ValueError):
    """A manual-protocol result does not carry exactly the four verdicts."""


@dataclass(frozen=True)
class QAPair:
    question: str
    ground_truth_answer: str
    ada: str
    source_doc: str = ""

    def __post_init__(self) -> None:
        if not self.question or not self.ground_truth_answer:
            raise ValueError("question and answer must be non-empty")
        if not validate_ada(self.ada):
            raise ValueError(f"invalid ADA {self.ada!r}")

    def to_json(self) -> dict:
        return {"question": self.question, "ground_truth": self.ground_truth_answer,
                "ada": self.ada}

    @classmethod
    def from_json(cls, doc: Mapping) -> "QAPair":
        return cls(
            question=str(doc["question"]),
            ground_truth_answer=str(doc["ground_truth"]),
            ada=str(doc["ada"]),
            source_doc=str(doc.get("ada", "")),
        )


def read_qa_pairs(path: Path | str) -> list[QAPair]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            pairs.append(QAPair.from_json(json.loads(line)))
    return pairs


def generate_qa_pairs(
    layout: CorpusLayout, sample_size: int, generator: GeneratorPort, seed: int = 0
) -> tuple[list[QAPair], list[str]]:
    """One QA pair per sampled document (seeded, without replacement).

    Unparseable generator outputs are retried once then skipped; skipped
    document ADAs are returned alongside the pairs.
    """
    adas = list(layout.iter_adas())
    if sample_size > len(adas):
        raise InvalidSample(f"sample_size {sample_size} > corpus size {len(adas)}")
    rng = random.Random(seed)
    sample = rng.sample(adas, sample_size)
    pairs: list[QAPair] = []
    skipped: list[str] = []
    for ada in sample:
        doc = load_document(layout, ada)
        prompt = QA_PROMPT_V1.replace("{document}", doc.body_markdown)
        pair = None
        for _ in range(2):
            raw = "".join(generator.generate(prompt))
            try:
                parsed = json.loads(raw[raw.find("{") : raw.rfind("}") + 1])
                pair = QAPair(
                    question=str(parsed["question"]),
                    ground_truth_answer=str(parsed["answer"]),
                    ada=ada,
                    source_doc=ada,
                )
                break
            except (ValueError, KeyError, TypeError):
                continue
        if pair is None:
            skipped.append(ada)
        else:
            pairs.append(pair)
    return pairs, skipped


def semantic_score(a: str, b: str, encoder: EncoderPort) -> float:
    """100 x clamped cosine similarity of the two encodings; symmetric.

    Blank inputs carry no signal: one blank side scores 0, two blank sides
    are identical and score 100.
    """
    a_blank = not a.strip()
    b_blank = not b.strip()
    if a_blank and b_blank:
        return 100.0
    if a_blank or b_blank:
        return 0.0
    va = np.asarray(encoder.encode(a), dtype=np.float64)
    vb = np.asarray(encoder.encode(b), dtype=np.float64)
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    if denom == 0.0:
        return 0.0
    cos = float(np.dot(va, vb)) / denom
    return 100.0 * min(1.0, max(0.0, cos))


def tfidf_similarity(a: str, b: str, corpus_df: IndexStats | None = None) -> float:
    """100 x cosine of TF-IDF vectors (tf = raw count, idf = ln(N/(1+df))).

    Document frequencies come from the supplied index stats, or from the
    two-document degenerate statistics when absent. Negative cosines clamp
    to 0 (high-df terms can carry negative idf).
    """
    terms_a = analyze_greek(a)
    terms_b = analyze_greek(b)
    if sorted(terms_a) == sorted(terms_b):
        return 100.0  # identical term multisets: cosine is 1 by definition
    vocab = sorted(set(terms_a) | set(terms_b))
    if corpus_df is not None:
        n_docs = max(corpus_df.n_docs, 1)
        df = corpus_df.df
    else:
        n_docs = 2
        df = {t: (t in terms_a) + (t in terms_b) for t in vocab}
    va = np.zeros(len(vocab))
    vb = np.zeros(len(vocab))
    for i, term in enumerate(vocab):
        idf = math.log(n_docs / (1 + df.get(term, 0)))
        va[i] = terms_a.count(term) * idf
        vb[i] = terms_b.count(term) * idf
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    if denom == 0.0:
        return 100.0 if terms_a == terms_b else 0.0
    cos = float(np.dot(va, vb)) / denom
    return 100.0 * min(1.0, max(0.0, cos))


def parse_greek_amount(text: str) -> Decimal:
    """'73.225,56' -> Decimal('73225.56')."""
    return Decimal(text.replace(".", "").replace(",", "."))


def format_greek_amount(value: Decimal) -> str:
    """Decimal('73225.56') -> '73.225,56' (two decimal places)."""
    quantized = value.quantize(Decimal("0.01"))
    whole, frac = f"{quantized:f}".split(".")
    groups = []
    while len(whole) > 3:
        groups.insert(0, whole[-3:])
        whole = whole[:-3]
    groups.insert(0, whole)
    return ".".join(groups) + "," + frac


def extract_amounts(text: str) -> list[Decimal]:
    """Greek-formatted monetary values, in order of appearance, duplicates kept."""
    return [parse_greek_amount(m.group(0)) for m in _AMOUNT_RE.finditer(text)]


def amount_match(predicted: str, truth: str) -> float:
    """Multiset Jaccard overlap of extracted amounts, as a percentage.

    When the truth mentions no amounts: 100 if the prediction is also
    amount-free, else 0.
    """
    pred = extract_amounts(predicted)
    true = extract_amounts(truth)
    if not true:
        return 100.0 if not pred else 0.0
    pred_counts: dict[Decimal, int] = {}
    true_counts: dict[Decimal, int] = {}
    for v in pred:
        pred_counts[v] = pred_counts.get(v, 0) + 1
    for v in true:
        true_counts[v] = true_counts.get(v, 0) + 1
    keys = set(pred_counts) | set(true_counts)
    intersection = sum(min(pred_counts.get(k, 0), true_counts.get(k, 0)) for k in keys)
    union = sum(max(pred_counts.get(k, 0), true_counts.get(k, 0)) for k in keys)
    return 100.0 * intersection / union


@dataclass(frozen=True)
class ComparisonScores:
    ada: str
    semantic_score: float
    tfidf_similarity: float
    amount_match: float
    equivalent: bool
    failed: bool = False


@dataclass
class AutomatedReport:
    scores: list[ComparisonScores] = field(default_factory=list)
    threshold: float = EQUIVALENCE_THRESHOLD

    def equivalent_split(self, threshold: float | None = None) -> tuple[int, int]:
        """(equivalent, not equivalent) under the given threshold, no re-scoring."""
        t = self.threshold if threshold is None else threshold
        eq = sum(1 for s in self.scores if s.semantic_score >= t)
        return eq, len(self.scores) - eq

    def rows(self) -> dict[str, str]:
        n = len(self.scores)
        eq, neq = self.equivalent_split()
        mean = lambda xs: (sum(xs) / len(xs)) if xs else 0.0  # noqa: E731
        return {
            "Total Comparisons": str(n),
            "Semantically Equivalent (≥ 70%)": f"{eq} ({100 * eq / n:.1f}%)" if n else "0",
            "Not Equivalent (< 70%)": f"{neq} ({100 * neq / n:.1f}%)" if n else "0",
            "Average Semantic Score": f"{mean([s.semantic_score for s in self.scores]):.1f}%",
            "Average TF-IDF Similarity": f"{mean([s.tfidf_similarity for s in self.scores]):.1f}%",
            "Average Amount Match": f"{mean([s.amount_match for s in self.scores]):.1f}%",
        }

    def to_json(self) -> dict:
        return {
            "rows": self.rows(),
            "threshold": self.threshold,
            "scores": [
                {
                    "ada": s.ada,
                    "semantic_score": s.semantic_score,
                    "tfidf_similarity": s.tfidf_similarity,
                    "amount_match": s.amount_match,
                    "equivalent": s.equivalent,
                    "failed": s.failed,
                }
                for s in self.scores
            ],
        }


def evaluate_automated(
    pairs: Iterable[QAPair],
    system: Callable[[str], str],
    encoder: EncoderPort,
    corpus_df: IndexStats | None = None,
    threshold: float = EQUIVALENCE_THRESHOLD,
) -> AutomatedReport:
    """Score the answer pipeline on every pair.

    Per-pair pipeline failures count as not-equivalent with zero scores and
    are flagged, not raised.
    """
    report = AutomatedReport(threshold=threshold)
    for pair in pairs:
        try:
            predicted = system(pair.question)
            sem = semantic_score(predicted, pair.ground_truth_answer, encoder)
            tfidf = tfidf_similarity(predicted, pair.ground_truth_answer, corpus_df)
            amounts = amount_match(predicted, pair.ground_truth_answer)
            report.scores.append(
                ComparisonScores(
                    ada=pair.ada,
                    semantic_score=sem,
                    tfidf_similarity=tfidf,
                    amount_match=amounts,
                    equivalent=sem >= threshold,
                )
            )
        except Exception:
            report.scores.append(
                ComparisonScores(
                    ada=pair.ada, semantic_score=0.0, tfidf_similarity=0.0,
                    amount_match=0.0, equivalent=False, failed=True,
                )
            )
    return report


@dataclass(frozen=True)
class ManualOrgResult:
    organization: str
    verdicts: Mapping[str, str]  # MANUAL_QUESTION_KEYS -> FULL/PARTIAL/INCORRECT
    notes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if tuple(sorted(self.verdicts)) != tuple(sorted(MANUAL_QUESTION_KEYS)):
            raise MalformedResult(
                f"expected verdicts for {MANUAL_QUESTION_KEYS}, got {tuple(self.verdicts)}"
            )
        for key, verdict in self.verdicts.items():
            if verdict not in (FULL, PARTIAL, INCORRECT):
                raise MalformedResult(f"unknown verdict {verdict!r} for {key}")


@dataclass
class ManualSummary:
    total: int
    fully_correct: int
    partially_correct: int
    incorrect: int
    overall_accuracy: float
    footnotes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "total_questions": self.total,
            "fully_correct": self.fully_correct,
            "partially_correct": self.partially_correct,
            "incorrect": self.incorrect,
            "overall_accuracy": self.overall_accuracy,
            "footnotes": list(self.footnotes),
        }


def score_manual(
    results: Sequence[ManualOrgResult], reported_accuracy: float | None = None
) -> ManualSummary:
    """Overall accuracy = (FULL + 0.5 * PARTIAL) / total x 100.

    When a previously reported accuracy figure is supplied and disagrees with
    the formula, the mismatch is footnoted rather than reconciled.
    """
    tallies = {FULL: 0, PARTIAL: 0, INCORRECT: 0}
    for result in results:
        for verdict in result.verdicts.values():
            tallies[verdict] += 1
    total = sum(tallies.values())
    accuracy = 100.0 * (tallies[FULL] + 0.5 * tallies[PARTIAL]) / total if total else 0.0
    summary = ManualSummary(
        total=total,
        fully_correct=tallies[FULL],
        partially_correct=tallies[PARTIAL],
        incorrect=tallies[INCORRECT],
        overall_accuracy=accuracy,
    )
    if reported_accuracy is not None and abs(reported_accuracy - accuracy) > 1e-9:
        summary.footnotes.append(
            f"reported overall accuracy {reported_accuracy:.1f}% does not follow from "
            f"the verdict counts; the (FULL + 0.5 x PARTIAL)/total formula gives "
            f"{accuracy:.1f}%"
        )
    return summary


def load_reference_fixtures() -> dict:
    text = resources.files("apofasis.data").joinpath("evaluation_fixtures.json").read_text(
        encoding="utf-8"
    )
    return json.loads(text)


@dataclass(frozen=True)
class FixtureCheck:
    name: str
    kind: str
    ok: bool
    expected: str
    actual: str
    abs_error: Decimal = Decimal(0)


def verify_aggregation_fixtures() -> list[FixtureCheck]:
    """Re-check the arithmetic of the bundled reference evaluation figures.

    For every organization: the addend breakdown must sum to its stated
    total, and the response total is compared against the ground truth;
    mismatches are flagged with their absolute error.
    """
    fixtures = load_reference_fixtures()
    checks: list[FixtureCheck] = []
    for org in fixtures["organizations"]:
        name = org["name"]
        response_total = parse_greek_amount(org["response_total"])
        if "response_addends" in org:
            total = sum(parse_greek_amount(a) for a in org["response_addends"])
            checks.append(
                FixtureCheck(
                    name=name,
                    kind="addends_sum",
                    ok=total == response_total,
                    expected=str(response_total),
                    actual=str(total),
                    abs_error=abs(total - response_total),
                )
            )
        truth_total = parse_greek_amount(org["ground_truth_total"])
        checks.append(
            FixtureCheck(
                name=name,
                kind="total_vs_ground_truth",
                ok=response_total == truth_total,
                expected=str(truth_total),
                actual=str(response_total),
                abs_error=abs(response_total - truth_total),
            )
        )
    manual = fixtures["manual_summary"]
    formula = 100.0 * (manual["fully_correct"] + 0.5 * manual["partially_correct"]) / manual[
        "total_questions"
    ]
    checks.append(
        FixtureCheck(
            name="manual summary",
            kind="overall_accuracy_formula",
            ok=abs(formula - manual["reported_overall_accuracy"]) <= 1e-9,
            expected=f"{manual['reported_overall_accuracy']:.1f}",
            actual=f"{formula:.1f}",
            abs_error=Decimal(str(abs(formula - manual["reported_overall_accuracy"]))),
        )
    )
    return checks
