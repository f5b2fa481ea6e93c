"""Section-dump parsing and limitation-section extraction.

Corpora are JSON Lines, one document per line:

    {"id": "...", "category": "...", "sections": [{"heading": "...", "text": "..."}]}

A bare mapping of heading -> text (section-parser output) is also accepted;
``id``/``category`` keys, when present, are treated as metadata rather than
sections. Extraction is pure and per-document, so callers may parallelize
freely as long as they keep the output in input order.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .errors import IntegrityError, ParseError
from .textutil import sentence_spans

_NUM_PREFIX_RE = re.compile(r"^\s*\d+(?:\.\d+)*[.):]*\s*")
_LIMITATION_TOKEN_RE = re.compile(r"\blimitations?\b", re.IGNORECASE)

# Sections that rarely discuss the paper's own limitations; never a source
# for implicit extraction. Matched as substrings of the normalized heading.
EXCLUDED_IMPLICIT_HEADINGS = (
    "abstract",
    "introduction",
    "related work",
    "methodology",
    "method",
    "acknowledgment",
    "acknowledgments",
)

MODE_EXPLICIT = "explicit"
MODE_IMPLICIT = "implicit"


@dataclass(frozen=True)
class RawDocument:
    """One parsed article: ordered (heading, body) sections plus metadata."""

    doc_id: str
    category: str
    sections: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class LimitationRecord:
    """One extracted limitations passage with its provenance."""

    doc_id: str
    text: str
    mode: str
    source_heading: str
    word_count: int


@dataclass(frozen=True)
class CorpusStats:
    """Per-category (explicit, implicit) record counts."""

    per_category: dict[str, tuple[int, int]]

    @property
    def total_explicit(self) -> int:
        return sum(e for e, _ in self.per_category.values())

    @property
    def total_implicit(self) -> int:
        return sum(i for _, i in self.per_category.values())

    @property
    def total(self) -> int:
        return self.total_explicit + self.total_implicit


def normalize_heading(heading: str) -> str:
    """Matching key for a heading: lowercased, numeric prefix and edge punctuation stripped."""
    h = heading.strip().lower()
    h = _NUM_PREFIX_RE.sub("", h)
    h = re.sub(r"\s+", " ", h)
    return h.strip(" .:")


def parse_document(raw: Mapping[str, Any], doc_id: str | None = None) -> RawDocument:
    """Build a RawDocument from a structured blob.

    Accepts either the canonical ``{"id", "category", "sections": [...]}`` form
    or a bare heading -> text mapping. ``doc_id`` is a fallback when the blob
    carries no ``id`` field.
    """
    if not isinstance(raw, Mapping):
        raise ParseError(f"document must be a mapping, got {type(raw).__name__}")

    sections: list[tuple[str, str]] = []
    if "sections" in raw:
        if not isinstance(raw["sections"], Sequence) or isinstance(raw["sections"], (str, bytes)):
            raise ParseError("field 'sections' must be a list of {heading, text} objects")
        for i, sec in enumerate(raw["sections"]):
            if not isinstance(sec, Mapping):
                raise ParseError(f"section {i} is not an object")
            heading = sec.get("heading")
            text = sec.get("text")
            if not isinstance(heading, str):
                raise ParseError(f"section {i}: field 'heading' must be a string")
            if not isinstance(text, str):
                raise ParseError(f"section {i}: field 'text' must be a string")
            sections.append((heading, text))
    else:
        for key, value in raw.items():
            if key in ("id", "category"):
                continue
            if not isinstance(value, str):
                raise ParseError(f"section field '{key}' must be a string")
            sections.append((str(key), value))

    resolved_id = raw.get("id", doc_id)
    if not isinstance(resolved_id, str) or not resolved_id:
        raise ParseError("field 'id' is missing or empty")
    category = raw.get("category", "unknown")
    if not isinstance(category, str) or not category:
        category = "unknown"
    return RawDocument(doc_id=resolved_id, category=category, sections=tuple(sections))


def serialize_document(doc: RawDocument) -> dict[str, Any]:
    """Inverse of parse_document for the canonical schema."""
    return {
        "id": doc.doc_id,
        "category": doc.category,
        "sections": [{"heading": h, "text": t} for h, t in doc.sections],
    }


def iter_corpus(path: str | Path) -> Iterator[RawDocument]:
    """Stream documents out of a JSONL corpus file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                blob = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                yield parse_document(blob)
            except ParseError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc


def _word_count(text: str) -> int:
    return len(text.split())


def extract_explicit(doc: RawDocument) -> LimitationRecord | None:
    """Record from the first section whose heading carries the 'limitation(s)' token."""
    for heading, body in doc.sections:
        if _LIMITATION_TOKEN_RE.search(normalize_heading(heading)):
            return LimitationRecord(
                doc_id=doc.doc_id,
                text=body,
                mode=MODE_EXPLICIT,
                source_heading=heading,
                word_count=_word_count(body),
            )
    return None


def extract_implicit(doc: RawDocument) -> LimitationRecord | None:
    """Scan eligible sections for the standalone word 'limitation(s)'.

    The first eligible section (document order) containing the word yields a
    record that starts at the beginning of the sentence holding the match and
    runs to the end of that section's body. Sections whose normalized heading
    contains an excluded phrase are never a source.
    """
    for heading, body in doc.sections:
        norm = normalize_heading(heading)
        if any(excl in norm for excl in EXCLUDED_IMPLICIT_HEADINGS):
            continue
        m = _LIMITATION_TOKEN_RE.search(body)
        if m is None:
            continue
        start = 0
        for s, e in sentence_spans(body):
            if s <= m.start() < e:
                start = s
                break
        text = body[start:].strip()
        return LimitationRecord(
            doc_id=doc.doc_id,
            text=text,
            mode=MODE_IMPLICIT,
            source_heading=heading,
            word_count=_word_count(text),
        )
    return None


def extract_record(doc: RawDocument) -> LimitationRecord | None:
    """Explicit extraction always preempts implicit extraction."""
    record = extract_explicit(doc)
    if record is not None:
        return record
    return extract_implicit(doc)


def corpus_stats(records: Sequence[LimitationRecord], docs: Sequence[RawDocument]) -> CorpusStats:
    """Per-category explicit/implicit counts; every record must reference a known doc."""
    categories = {d.doc_id: d.category for d in docs}
    counts: dict[str, list[int]] = {}
    for rec in records:
        if rec.doc_id not in categories:
            raise IntegrityError(f"record references unknown document id {rec.doc_id!r}")
        bucket = counts.setdefault(categories[rec.doc_id], [0, 0])
        if rec.mode == MODE_EXPLICIT:
            bucket[0] += 1
        else:
            bucket[1] += 1
    return CorpusStats({cat: (e, i) for cat, (e, i) in sorted(counts.items())})


def record_to_dict(rec: LimitationRecord) -> dict[str, Any]:
    return {
        "doc_id": rec.doc_id,
        "mode": rec.mode,
        "source_heading": rec.source_heading,
        "text": rec.text,
        "word_count": rec.word_count,
    }


def record_from_dict(blob: Mapping[str, Any]) -> LimitationRecord:
    try:
        return LimitationRecord(
            doc_id=blob["doc_id"],
            text=blob["text"],
            mode=blob["mode"],
            source_heading=blob["source_heading"],
            word_count=blob["word_count"],
        )
    except KeyError as exc:
        raise ParseError(f"record is missing field {exc.args[0]!r}") from exc


def write_records_jsonl(records: Sequence[LimitationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), ensure_ascii=False) + "\n")


def read_records_jsonl(path: str | Path) -> list[LimitationRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(record_from_dict(json.loads(line)))
    return out


def stats_to_csv(stats: CorpusStats) -> str:
    lines = ["category,explicit,implicit"]
    for cat, (e, i) in stats.per_category.items():
        lines.append(f"{cat},{e},{i}")
    return "\n".join(lines) + "\n"
