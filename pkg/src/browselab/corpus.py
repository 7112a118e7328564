"""Corpus construction: ingest, normalize, deduplicate, and persist documents.

Documents carry a ``gold`` or ``distractor`` role. Distractors come from bulk
ingestion; gold documents are planted next to a QA instance so that its answer
is recoverable through search. A finished :class:`CorpusManifest` is immutable
by convention (single writer during ingest, shared freely afterwards).

On-disk format is JSONL, one document per line:

    {"doc_id": ..., "url": ..., "title": ..., "body": ..., "role": ..., "checksum": ...}
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Union

from .prompts import render_answer_normalization_prompt

logger = logging.getLogger(__name__)

ROLE_GOLD = "gold"
ROLE_DISTRACTOR = "distractor"

_ROLES = (ROLE_GOLD, ROLE_DISTRACTOR)

_SPACE_RUNS = re.compile(r"[ \t]+")
_NEWLINE_RUNS = re.compile(r"\n+")
_SPACE_AROUND_NEWLINE = re.compile(r" ?\n ?")
# Cc minus \t and \n (tabs are turned into spaces before this strip runs)
_CONTROL_CHARS = re.compile(r"[\x00-\x08\x0B-\x1F\x7F-\x9F]")
_ANSWER_LABEL = re.compile(r"^(?:final answer|exact answer|answer)\s*[:：]\s*", re.IGNORECASE)


class CorpusError(Exception):
    """Raised for malformed corpus or QA inputs."""


@dataclass(frozen=True)
class Document:
    """One corpus entry. ``checksum`` is the hash of the normalized body."""

    doc_id: str
    url: str
    title: str
    body: str
    role: str
    checksum: str

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "url": self.url,
            "title": self.title,
            "body": self.body,
            "role": self.role,
            "checksum": self.checksum,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Document":
        return cls(
            doc_id=record["doc_id"],
            url=record["url"],
            title=record.get("title", ""),
            body=record["body"],
            role=record["role"],
            checksum=record["checksum"],
        )


@dataclass
class QAInstance:
    """A question with a short normalized reference answer and its gold docs."""

    qid: str
    question: str
    reference_answer: str
    gold_doc_ids: set[str] = field(default_factory=set)

    def to_record(self) -> dict:
        return {
            "qid": self.qid,
            "question": self.question,
            "reference_answer": self.reference_answer,
            "gold_doc_ids": sorted(self.gold_doc_ids),
        }


@dataclass
class RejectedRecord:
    url: str
    reason: str  # "empty_body" | "duplicate"


@dataclass
class IngestReport:
    """Delta produced by one ingest pass: documents added plus the reject log."""

    added: list[Document] = field(default_factory=list)
    rejected: list[RejectedRecord] = field(default_factory=list)


class CorpusManifest:
    """Ordered, checksum-deduplicated document collection.

    Single-writer during construction; treat as immutable once built.
    """

    def __init__(self) -> None:
        self.documents: list[Document] = []
        self._by_id: dict[str, Document] = {}
        self._by_checksum: dict[str, Document] = {}
        self.provenance: list[str] = []

    def __len__(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise CorpusError(f"unknown doc_id {doc_id!r}") from None

    def find_checksum(self, checksum: str) -> Optional[Document]:
        return self._by_checksum.get(checksum)

    def counts_by_role(self) -> dict[str, int]:
        counts = {ROLE_GOLD: 0, ROLE_DISTRACTOR: 0}
        for doc in self.documents:
            counts[doc.role] += 1
        return counts

    def note(self, message: str) -> None:
        self.provenance.append(message)

    def _add(self, doc: Document) -> None:
        if doc.doc_id in self._by_id:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        self.documents.append(doc)
        self._by_id[doc.doc_id] = doc
        self._by_checksum[doc.checksum] = doc

    def _retag(self, doc_id: str, role: str) -> Document:
        old = self._by_id[doc_id]
        if old.role == role:
            return old
        new = Document(old.doc_id, old.url, old.title, old.body, role, old.checksum)
        self._by_id[doc_id] = new
        self._by_checksum[new.checksum] = new
        self.documents[self.documents.index(old)] = new
        return new

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for doc in self.documents:
                fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        manifest = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"line {lineno}: invalid JSON: {exc}") from None
                manifest._add(Document.from_record(record))
        return manifest


def normalize_text(text: str) -> str:
    """Normalize a document body: NFC, control chars stripped, whitespace collapsed.

    Idempotent; "Hello\\r\\n\\r\\nWorld" becomes "Hello\\nWorld".
    """
    text = unicodedata.normalize("NFC", text)
    text = text.replace("\r\n", "\n").replace("\r", "\n").replace("\t", " ")
    text = _CONTROL_CHARS.sub("", text)
    text = _SPACE_RUNS.sub(" ", text)
    text = _SPACE_AROUND_NEWLINE.sub("\n", text)
    text = _NEWLINE_RUNS.sub("\n", text)
    return text.strip()


def canonical_url(url: str) -> str:
    """Lowercase scheme and host, strip the fragment and any trailing slash."""
    url = url.strip()
    url, _, _ = url.partition("#")
    scheme, sep, rest = url.partition("://")
    if sep:
        host, slash, tail = rest.partition("/")
        url = scheme.lower() + sep + host.lower() + slash + tail
    return url.rstrip("/") or url


def body_checksum(normalized_body: str) -> str:
    return hashlib.sha256(normalized_body.encode("utf-8")).hexdigest()


def make_doc_id(canon_url: str, checksum: str) -> str:
    """Deterministic id from canonical URL + checksum (stable across re-runs)."""
    return hashlib.sha256(f"{canon_url}\n{checksum}".encode("utf-8")).hexdigest()[:16]


def build_document(url: str, title: str, body: str, role: str) -> Optional[Document]:
    """Normalize one raw record into a Document; None when the body is empty."""
    if role not in _ROLES:
        raise CorpusError(f"unknown role {role!r}")
    normalized = normalize_text(body or "")
    if not normalized:
        return None
    canon = canonical_url(url)
    checksum = body_checksum(normalized)
    return Document(
        doc_id=make_doc_id(canon, checksum),
        url=canon,
        title=normalize_text(title or "").replace("\n", " "),
        body=normalized,
        role=role,
        checksum=checksum,
    )


def ingest_documents(
    manifest: CorpusManifest,
    raw_records: Iterable[dict],
    role: str = ROLE_DISTRACTOR,
) -> IngestReport:
    """Ingest a stream of ``{url, title, body}`` records into the manifest.

    Empty bodies and checksum duplicates are skipped and logged in the report.
    Ingesting the same stream twice is a no-op the second time.
    """
    report = IngestReport()
    for record in raw_records:
        url = record.get("url", "")
        if not url:
            raise CorpusError("record without a URL")
        doc = build_document(url, record.get("title", ""), record.get("body", ""), role)
        if doc is None:
            logger.info("rejected %s: empty body after normalization", url)
            report.rejected.append(RejectedRecord(url=url, reason="empty_body"))
            continue
        if manifest.find_checksum(doc.checksum) is not None:
            logger.info("rejected %s: duplicate checksum %s", url, doc.checksum[:12])
            report.rejected.append(RejectedRecord(url=url, reason="duplicate"))
            continue
        manifest._add(doc)
        report.added.append(doc)
    return report


def plant_gold(
    manifest: CorpusManifest,
    qa: QAInstance,
    gold_docs: list[Union[dict, Document]],
) -> list[Document]:
    """Insert gold documents for ``qa`` and record their ids on the instance.

    A gold record whose body duplicates an existing document re-tags that
    document as gold and reuses its doc_id instead of adding a copy.
    """
    if not gold_docs:
        raise CorpusError(f"no gold documents supplied for qid {qa.qid!r}")
    planted: list[Document] = []
    for record in gold_docs:
        if isinstance(record, Document):
            record = record.to_record()
        doc = build_document(
            record.get("url", ""), record.get("title", ""), record.get("body", ""), ROLE_GOLD
        )
        if doc is None:
            raise CorpusError(f"gold document for qid {qa.qid!r} has an empty body")
        existing = manifest.find_checksum(doc.checksum)
        if existing is not None:
            doc = manifest._retag(existing.doc_id, ROLE_GOLD)
        else:
            manifest._add(doc)
        planted.append(doc)
        qa.gold_doc_ids.add(doc.doc_id)
    return planted


def _extract_boxed(text: str) -> Optional[str]:
    """Content of the last ``\\boxed{...}`` occurrence, brace-balanced."""
    marker = r"\boxed{"
    start = text.rfind(marker)
    if start < 0:
        return None
    depth = 1
    pos = start + len(marker)
    for i in range(pos, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[pos:i]
    return None


def rule_based_answer(raw_text: str) -> str:
    """Deterministic answer extraction: boxed content, else the last non-empty
    line with any leading "final answer:"-style label stripped."""
    boxed = _extract_boxed(raw_text)
    if boxed is not None:
        return boxed.strip()
    lines = [line.strip() for line in raw_text.splitlines() if line.strip()]
    if not lines:
        return ""
    return _ANSWER_LABEL.sub("", lines[-1]).strip()


def normalize_answer(
    raw_text: str,
    client: Optional[Callable[[str], str]] = None,
) -> str:
    """Reduce ``raw_text`` to its shortest answer form.

    With a model client the extraction prompt is used; on client failure (or
    when the client returns nothing) the rule-based path is applied and the
    instance is flagged via a warning log.
    """
    if not raw_text or not raw_text.strip():
        raise CorpusError("cannot normalize an empty answer")
    if client is not None:
        try:
            result = client(render_answer_normalization_prompt(raw_text))
        except Exception as exc:
            logger.warning("answer-normalization client failed (%s); using fallback", exc)
        else:
            result = (result or "").strip()
            if result:
                return " ".join(result.split())
            logger.warning("answer-normalization client returned empty text; using fallback")
    return rule_based_answer(raw_text)


def load_qa(path: str | Path) -> list[QAInstance]:
    """Load QA instances from JSONL; raises on malformed lines or duplicate qids."""
    instances: list[QAInstance] = []
    seen: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON: {exc}") from None
            for required in ("qid", "question", "reference_answer"):
                if required not in record:
                    raise CorpusError(f"line {lineno}: missing field {required}")
            qid = record["qid"]
            if qid in seen:
                raise CorpusError(
                    f"duplicate qid {qid!r} on lines {seen[qid]} and {lineno}"
                )
            seen[qid] = lineno
            answer = record["reference_answer"]
            if not answer or "\n" in answer:
                raise CorpusError(f"line {lineno}: reference_answer must be non-empty single-line")
            instances.append(
                QAInstance(
                    qid=qid,
                    question=record["question"],
                    reference_answer=answer,
                    gold_doc_ids=set(record.get("gold_doc_ids", [])),
                )
            )
    return instances


def save_qa(instances: Iterable[QAInstance], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for qa in instances:
            fh.write(json.dumps(qa.to_record(), ensure_ascii=False) + "\n")


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    """Stream raw records from a JSONL file (ingestion input format)."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)
