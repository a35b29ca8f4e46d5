"""Canonical record types and the on-disk corpus store.

One decision is stored as two files side by side under a hash shard:
``<shard>/<quoted-ada>.json`` (metadata, platform field names) and
``<shard>/<quoted-ada>.md`` (full extracted text, UTF-8 Markdown).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator
from urllib.parse import quote, unquote

# Upper-case Greek block Α..Ω without the reserved U+03A2 slot, plus Latin
# upper-case and digits. Source PDFs mix the two scripts, so both are accepted.
_ADA_CLASS = "0-9A-ZΑ-ΡΣ-Ω"
ADA_RE = re.compile(rf"[{_ADA_CLASS}]{{8,12}}-[{_ADA_CLASS}]{{3}}")
_ADA_FULL_RE = re.compile(rf"^{ADA_RE.pattern}$")

# Platform statuses are open-ended; unknown raw values are preserved as-is.
KNOWN_STATUSES = frozenset({"PUBLISHED", "PENDING_REVOCATION", "REVOKED", "SUBMITTED"})

SOURCE_API_JSON_PLUS_PDF = "API_JSON_PLUS_PDF"
SOURCE_PREEXTRACTED_TEXT = "PREEXTRACTED_TEXT"


class NotFound(KeyError):
    """No stored document for the requested ADA."""


class CorruptRecord(ValueError):
    """Stored metadata fails schema validation."""


def validate_ada(candidate: str) -> bool:
    """True iff `candidate` is a well-formed decision identifier."""
    return bool(_ADA_FULL_RE.match(candidate))


def status_kind(status: str) -> str:
    """Canonical status name, or "OTHER" for values outside the known set."""
    return status if status in KNOWN_STATUSES else "OTHER"


@dataclass(frozen=True)
class DecisionRecord:
    """Normalized metadata for one administrative act."""

    ada: str
    protocol_number: str = ""
    subject: str = ""
    issue_date: int = 0  # Unix ms
    decision_type_id: str = ""
    organization_id: str = ""
    organization_name: str | None = None
    unit_ids: tuple[str, ...] = ()
    signer_ids: tuple[str, ...] = ()
    extra_field_values: dict[str, Any] = field(default_factory=dict)
    submission_timestamp: int = 0  # Unix ms
    status: str = "PUBLISHED"
    version_id: str = ""

    def validate(self) -> None:
        if not validate_ada(self.ada):
            raise CorruptRecord(f"invalid ADA: {self.ada!r}")
        if self.issue_date < 0 or self.submission_timestamp < 0:
            raise CorruptRecord("timestamps must be >= 0")

    def to_json(self) -> dict[str, Any]:
        """Platform-shaped dict (field names as published by the API)."""
        doc: dict[str, Any] = {
            "ada": self.ada,
            "protocolNumber": self.protocol_number,
            "subject": self.subject,
            "issueDate": self.issue_date,
            "decisionTypeId": self.decision_type_id,
            "organizationId": self.organization_id,
            "unitIds": list(self.unit_ids),
            "signerIds": list(self.signer_ids),
            "extraFieldValues": self.extra_field_values,
            "submissionTimestamp": self.submission_timestamp,
            "status": self.status,
            "versionId": self.version_id,
        }
        if self.organization_name is not None:
            doc["organizationName"] = self.organization_name
        return doc

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "DecisionRecord":
        try:
            rec = cls(
                ada=str(doc["ada"]),
                protocol_number=str(doc.get("protocolNumber", "")),
                subject=str(doc.get("subject", "")),
                issue_date=int(doc.get("issueDate", 0)),
                decision_type_id=str(doc.get("decisionTypeId", "")),
                organization_id=str(doc.get("organizationId", "")),
                organization_name=(
                    None if doc.get("organizationName") is None else str(doc["organizationName"])
                ),
                unit_ids=tuple(str(u) for u in doc.get("unitIds", [])),
                signer_ids=tuple(str(s) for s in doc.get("signerIds", [])),
                extra_field_values=dict(doc.get("extraFieldValues", {})),
                submission_timestamp=int(doc.get("submissionTimestamp", 0)),
                status=str(doc.get("status", "PUBLISHED")),
                version_id=str(doc.get("versionId", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptRecord(f"malformed decision record: {exc}") from exc
        rec.validate()
        return rec


@dataclass(frozen=True)
class StoredDocument:
    """A decision record plus its extracted text and provenance."""

    record: DecisionRecord
    body_markdown: str = ""
    source: str = SOURCE_PREEXTRACTED_TEXT
    extraction_tool: str = ""
    stored_at: int = 0  # Unix ms

    def __post_init__(self) -> None:
        if "\x00" in self.body_markdown:
            raise CorruptRecord("document body contains NUL bytes")


def iso_utc(unix_ms: int) -> str:
    """Render a Unix-millisecond timestamp as ISO-8601 UTC (second precision)."""
    dt = datetime.fromtimestamp(unix_ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def render_metadata_header(record: DecisionRecord) -> str:
    """Deterministic line-oriented metadata header.

    Fixed field order; identical records yield byte-identical headers. Extra
    (type-specific) fields are appended sorted by key so financial fields
    always land in the same place.
    """
    org = record.organization_id
    if record.organization_name:
        org = f"{record.organization_name} ({record.organization_id})"
    lines = [
        f"ADA: {record.ada}",
        f"Protocol: {record.protocol_number}",
        f"Issue date: {iso_utc(record.issue_date)}",
        f"Subject: {record.subject}",
        f"Organization: {org}",
        f"Signers: {', '.join(record.signer_ids)}",
    ]
    for key in sorted(record.extra_field_values):
        value = record.extra_field_values[key]
        if not isinstance(value, str):
            value = json.dumps(value, ensure_ascii=False, sort_keys=True)
        lines.append(f"{key}: {value}")
    return "\n".join(lines)


def shard_for(ada: str) -> str:
    """Two-hex-character shard, bounding directory fan-out at 256 entries."""
    return hashlib.sha1(ada.encode("utf-8")).hexdigest()[:2]


@dataclass(frozen=True)
class CorpusLayout:
    """Root directory plus the ADA -> relative path mapping."""

    root: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))

    def relative_stem(self, ada: str) -> str:
        # quote() keeps file names ASCII-safe and is injective over ADAs.
        return f"{shard_for(ada)}/{quote(ada, safe='')}"

    def json_path(self, ada: str) -> Path:
        return self.root / (self.relative_stem(ada) + ".json")

    def md_path(self, ada: str) -> Path:
        return self.root / (self.relative_stem(ada) + ".md")

    def exists(self, ada: str) -> bool:
        return self.json_path(ada).is_file()

    def iter_adas(self) -> Iterator[str]:
        """All stored ADAs, in sorted order (deterministic walks)."""
        if not self.root.is_dir():
            return
        adas = []
        for path in self.root.glob("*/*.json"):
            adas.append(unquote(path.stem))
        yield from sorted(adas)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def store_document(layout: CorpusLayout, doc: StoredDocument) -> Path:
    """Persist metadata + body; returns the metadata path. Last writer wins."""
    doc.record.validate()
    json_path = layout.json_path(doc.record.ada)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    meta = doc.record.to_json()
    meta["provenance"] = {
        "source": doc.source,
        "extractionTool": doc.extraction_tool,
        "storedAt": doc.stored_at,
    }
    payload = json.dumps(meta, ensure_ascii=False, indent=2) + "\n"
    _atomic_write(json_path, payload.encode("utf-8"))
    _atomic_write(layout.md_path(doc.record.ada), doc.body_markdown.encode("utf-8"))
    return json_path


def load_document(layout: CorpusLayout, ada: str) -> StoredDocument:
    """Load a stored document; NotFound for unknown ADAs."""
    json_path = layout.json_path(ada)
    if not json_path.is_file():
        raise NotFound(ada)
    try:
        meta = json.loads(json_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CorruptRecord(f"unreadable metadata for {ada}: {exc}") from exc
    if not isinstance(meta, dict):
        raise CorruptRecord(f"metadata for {ada} is not an object")
    provenance = meta.pop("provenance", {})
    record = DecisionRecord.from_json(meta)
    md_path = layout.md_path(ada)
    body = md_path.read_text(encoding="utf-8") if md_path.is_file() else ""
    return StoredDocument(
        record=record,
        body_markdown=body,
        source=str(provenance.get("source", SOURCE_PREEXTRACTED_TEXT)),
        extraction_tool=str(provenance.get("extractionTool", "")),
        stored_at=int(provenance.get("storedAt", 0)),
    )


def load_record(layout: CorpusLayout, ada: str) -> DecisionRecord:
    return load_document(layout, ada).record


def replace_body(doc: StoredDocument, body: str) -> StoredDocument:
    return replace(doc, body_markdown=body)
