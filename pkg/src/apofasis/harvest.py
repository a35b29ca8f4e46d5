"""Client for the open-decisions HTTP API and the resumable bulk harvester.

Endpoint paths, page size and base URL are configuration so the whole module
runs against a local stub in tests. Every HTTP request draws one token from
a shared token bucket; checkpoints are written after each completed page, so
a restarted harvest never refetches finished pages.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import random
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

from apofasis.corpus import (
    SOURCE_API_JSON_PLUS_PDF,
    SOURCE_PREEXTRACTED_TEXT,
    CorpusLayout,
    CorruptRecord,
    DecisionRecord,
    NotFound,
    StoredDocument,
    store_document,
)

DEFAULT_BASE_URL = "https://diavgeia.gov.gr/opendata"
BASE_URL_ENV = "APOFASIS_API_BASE"

MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 0.5


class HttpError(RuntimeError):
    def __init__(self, status: int, url: str = ""):
        super().__init__(f"HTTP {status} for {url}")
        self.status = status


class RateLimited(HttpError):
    """HTTP 429: the caller must back off."""


class ParseError(ValueError):
    """The whole response body failed to parse."""


class ExtractionFailed(RuntimeError):
    def __init__(self, tool: str, returncode: int, detail: str = ""):
        super().__init__(f"extractor {tool!r} exited {returncode}: {detail}")
        self.tool = tool
        self.returncode = returncode


class TokenBucket:
    """Thread-safe token bucket; capacity one token, refilled at `rate`/s.

    Clock and sleep are injectable so rate compliance is testable against a
    fake clock. Acquisition timestamps are recorded for inspection.
    """

    def __init__(
        self,
        rate: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be > 0")
        self.rate = rate
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_free = None  # earliest time the next token is available
        self.acquired: list[float] = []

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            if self._next_free is None or now >= self._next_free:
                grant = now
            else:
                grant = self._next_free
            self._next_free = grant + 1.0 / self.rate
        wait = grant - now
        if wait > 0:
            self._sleep(wait)
        with self._lock:
            self.acquired.append(grant)


@dataclass(frozen=True)
class HarvestJob:
    date_from: dt.date
    date_to: dt.date
    checkpoint_path: Path
    organization_filter: str | None = None
    page_size: int = 100
    rate_limit: float = 2.0
    limit_pages: int | None = None

    def __post_init__(self) -> None:
        if self.date_from > self.date_to:
            raise ValueError("date_from must be <= date_to")
        if self.page_size < 1:
            raise ValueError("page_size must be >= 1")
        if self.rate_limit <= 0:
            raise ValueError("rate_limit must be > 0")


@dataclass
class HarvestCheckpoint:
    last_completed_page: int = -1
    fetched_adas: int = 0
    failures: list[tuple[str, str, int]] = field(default_factory=list)

    def save(self, path: Path) -> None:
        payload = {
            "last_completed_page": self.last_completed_page,
            "fetched_adas": self.fetched_adas,
            "failures": [list(f) for f in self.failures],
        }
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: Path) -> "HarvestCheckpoint":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            last_completed_page=int(doc["last_completed_page"]),
            fetched_adas=int(doc["fetched_adas"]),
            failures=[(str(a), str(e), int(n)) for a, e, n in doc.get("failures", [])],
        )


@dataclass(frozen=True)
class PageResult:
    records: list[DecisionRecord]
    skipped: list[str]  # per-entry parse error descriptions


class DiavgeiaClient:
    """HTTP client for decision metadata and document text.

    PDF-to-text extraction is pluggable: when the pre-extracted text endpoint
    is missing a document, the configured external `extractor_cmd` is run on
    the downloaded PDF and must print the text on stdout.
    """

    def __init__(
        self,
        base_url: str | None = None,
        session: requests.Session | None = None,
        bucket: TokenBucket | None = None,
        timeout: float = 15.0,
        extractor_cmd: list[str] | None = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int | None = None,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.session = session or requests.Session()
        self.bucket = bucket or TokenBucket(rate=2.0)
        self.timeout = timeout
        self.extractor_cmd = extractor_cmd
        self.sleep = sleep
        self._rng = random.Random(jitter_seed)

    def _get(self, path: str, params: dict | None = None) -> requests.Response:
        self.bucket.acquire()
        url = f"{self.base_url}{path}"
        response = self.session.get(url, params=params, timeout=self.timeout)
        if response.status_code == 429:
            raise RateLimited(429, url)
        if response.status_code == 404:
            raise NotFound(path)
        if not 200 <= response.status_code < 300:
            raise HttpError(response.status_code, url)
        return response

    def fetch_decision_page(self, job: HarvestJob, page: int) -> PageResult:
        """One page of decision metadata; malformed entries skipped, not fatal."""
        if page < 0:
            raise ValueError("page must be >= 0")
        params = {
            "from_date": job.date_from.isoformat(),
            "to_date": job.date_to.isoformat(),
            "page": page,
            "size": job.page_size,
        }
        if job.organization_filter:
            params["org"] = job.organization_filter
        response = self._get("/search", params)
        try:
            payload = response.json()
            entries = payload["decisions"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"unparseable search page {page}: {exc}") from exc
        records: list[DecisionRecord] = []
        skipped: list[str] = []
        for i, entry in enumerate(entries):
            try:
                records.append(DecisionRecord.from_json(entry))
            except (CorruptRecord, TypeError) as exc:
                skipped.append(f"entry {i}: {exc}")
        return PageResult(records=records, skipped=skipped)

    def fetch_document_text(self, ada: str) -> StoredDocument:
        """Metadata plus body text for one decision.

        stored_at mirrors the platform's submission timestamp so repeated
        harvests of the same range write byte-identical files.
        """
        meta = self._get(f"/decisions/{ada}").json()
        record = DecisionRecord.from_json(meta)
        try:
            text_response = self._get(f"/decisions/{ada}/document.txt")
            return StoredDocument(
                record=record,
                body_markdown=text_response.content.decode("utf-8"),
                source=SOURCE_PREEXTRACTED_TEXT,
                extraction_tool="preextracted",
                stored_at=record.submission_timestamp,
            )
        except NotFound:
            if not self.extractor_cmd:
                return StoredDocument(
                    record=record,
                    body_markdown="",
                    source=SOURCE_API_JSON_PLUS_PDF,
                    extraction_tool="",
                    stored_at=record.submission_timestamp,
                )
        pdf = self._get(f"/decisions/{ada}/document.pdf").content
        body = self._run_extractor(pdf)
        return StoredDocument(
            record=record,
            body_markdown=body,
            source=SOURCE_API_JSON_PLUS_PDF,
            extraction_tool=Path(self.extractor_cmd[0]).name,
            stored_at=record.submission_timestamp,
        )

    def _run_extractor(self, pdf_bytes: bytes) -> str:
        with tempfile.NamedTemporaryFile(suffix=".pdf", delete=False) as fh:
            fh.write(pdf_bytes)
            pdf_path = fh.name
        try:
            proc = subprocess.run(
                [*self.extractor_cmd, pdf_path], capture_output=True, timeout=300
            )
            if proc.returncode != 0:
                raise ExtractionFailed(
                    self.extractor_cmd[0],
                    proc.returncode,
                    proc.stderr.decode("utf-8", "replace")[:500],
                )
            return proc.stdout.decode("utf-8", "replace")
        finally:
            os.unlink(pdf_path)

    def retrying(self, fn: Callable, description: str):
        """Run `fn` with up to MAX_ATTEMPTS tries and jittered exponential backoff."""
        last_exc: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            try:
                return fn()
            except (HttpError, ParseError, requests.RequestException) as exc:
                last_exc = exc
                if attempt < MAX_ATTEMPTS - 1:
                    delay = BACKOFF_BASE_SECONDS * (2**attempt)
                    self.sleep(delay + self._rng.uniform(0, delay / 4))
        raise last_exc  # type: ignore[misc]


def _fetch_and_store(client: DiavgeiaClient, layout: CorpusLayout, ada: str) -> str | None:
    """Returns None on success, or the error class name after retries."""
    try:
        doc = client.retrying(lambda: client.fetch_document_text(ada), ada)
        store_document(layout, doc)
        return None
    except Exception as exc:
        return type(exc).__name__


def run_harvest(
    job: HarvestJob, layout: CorpusLayout, client: DiavgeiaClient, max_workers: int = 1
) -> HarvestCheckpoint:
    """Paged harvest into the corpus store, resumable from the checkpoint.

    Pages recorded in an existing checkpoint are not refetched. Per-item
    failures are retried (3 attempts, exponential backoff) then recorded in
    the checkpoint; only checkpoint I/O failures are fatal. Up to
    `max_workers` document fetches run concurrently, all drawing from the
    client's shared token bucket; checkpoint writes stay serialized.
    """
    checkpoint_path = Path(job.checkpoint_path)
    if checkpoint_path.is_file():
        checkpoint = HarvestCheckpoint.load(checkpoint_path)
    else:
        checkpoint = HarvestCheckpoint()
    page = checkpoint.last_completed_page + 1
    pages_this_run = 0
    while job.limit_pages is None or pages_this_run < job.limit_pages:
        try:
            result = client.retrying(
                lambda: client.fetch_decision_page(job, page), f"page {page}"
            )
        except Exception as exc:
            checkpoint.failures.append((f"page:{page}", type(exc).__name__, MAX_ATTEMPTS))
            checkpoint.save(checkpoint_path)
            break
        if not result.records and not result.skipped:
            checkpoint.save(checkpoint_path)
            break
        for note in result.skipped:
            checkpoint.failures.append((f"page:{page}:{note}", "CorruptRecord", 1))
        adas = [record.ada for record in result.records]
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                outcomes = list(pool.map(lambda a: _fetch_and_store(client, layout, a), adas))
        else:
            outcomes = [_fetch_and_store(client, layout, ada) for ada in adas]
        for ada, outcome in zip(adas, outcomes):
            if outcome is None:
                checkpoint.fetched_adas += 1
            else:
                checkpoint.failures.append((ada, outcome, MAX_ATTEMPTS))
        checkpoint.last_completed_page = page
        checkpoint.save(checkpoint_path)
        pages_this_run += 1
        page += 1
    return checkpoint
