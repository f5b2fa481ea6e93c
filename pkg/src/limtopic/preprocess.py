"""Cleaning rules for extracted limitation text and degenerate-record filtering.

``clean_text`` applies, in order: sentence segmentation, URL-sentence removal,
checklist-sentence removal, truncation at the first contamination marker,
"et al." removal, equation-token removal, non-ASCII-letter token removal,
newline/punctuation normalization (sentence-final periods retained), and
whitespace collapsing. The pass is re-applied until the text is stable, so
cleaning is idempotent by construction. All functions are pure per-record.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import LimitationRecord
from .textutil import split_sentences

_DATA = Path(__file__).resolve().parent / "data"

_URL_MARKERS = ("http://", "https://", "www.")
# markers that signal a foreign trailing section; matched at line/sentence start
_CONTAMINATION_RE = re.compile(r"^(future work|ethics|grants|appendix|section)\b", re.IGNORECASE)
_ET_AL = "et al."
_FINAL_PERIOD_RE = re.compile(r"\.[\"')\]]*$")
_NON_ALNUM_RE = re.compile(r"[^A-Za-z0-9]+")

MIN_WORDS = 15


@dataclass(frozen=True)
class CleanRecord:
    """A cleaned limitations passage that survived the word-count filter."""

    doc_id: str
    text: str
    word_count: int


def load_patterns(path: str | Path | None = None) -> tuple[re.Pattern[str], ...]:
    """Checklist patterns: one regex per line, '#' comments, case-insensitive."""
    if path is None:
        path = _DATA / "checklist_patterns.txt"
    patterns = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        patterns.append(re.compile(line, re.IGNORECASE))
    return tuple(patterns)


def load_math_symbols(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        path = _DATA / "math_symbols.txt"
    chars = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        chars.update(line)
    return frozenset(chars)


@lru_cache(maxsize=1)
def _default_patterns() -> tuple[re.Pattern[str], ...]:
    return load_patterns()


@lru_cache(maxsize=1)
def _default_math_symbols() -> frozenset[str]:
    return load_math_symbols()


def _clean_pass(
    text: str,
    patterns: Sequence[re.Pattern[str]],
    math_symbols: frozenset[str],
) -> str:
    kept: list[str] = []
    for sent in split_sentences(text):
        low = sent.lower()
        if any(u in low for u in _URL_MARKERS):
            continue
        if any(p.search(sent) for p in patterns):
            continue
        kept.append(sent)

    # truncate at the first contamination marker, checking each line of a sentence
    survivors: list[str] = []
    truncated = False
    for sent in kept:
        head: list[str] = []
        for line in sent.split("\n"):
            if _CONTAMINATION_RE.match(line.strip()):
                truncated = True
                break
            head.append(line)
        if head and " ".join(head).strip():
            survivors.append(" ".join(head))
        if truncated:
            break

    cleaned: list[str] = []
    for sent in survivors:
        had_period = bool(_FINAL_PERIOD_RE.search(sent.rstrip()))
        sent = sent.replace(_ET_AL, " ")
        tokens: list[str] = []
        for tok in sent.split():
            if any(c in math_symbols for c in tok):
                continue
            if any(c.isalpha() and not c.isascii() for c in tok):
                continue
            stripped = _NON_ALNUM_RE.sub("", tok)
            if stripped:
                tokens.append(stripped)
        if not tokens:
            continue
        out = " ".join(tokens)
        if had_period:
            out += "."
        cleaned.append(out)
    return " ".join(cleaned)


def clean_text(
    text: str,
    patterns: Sequence[re.Pattern[str]] | None = None,
    math_symbols: frozenset[str] | None = None,
) -> str:
    """Apply the cleaning rules until the output is stable. Empty output is legal."""
    if patterns is None:
        patterns = _default_patterns()
    if math_symbols is None:
        math_symbols = _default_math_symbols()
    prev = text
    out = _clean_pass(prev, patterns, math_symbols)
    while out != prev:
        prev = out
        out = _clean_pass(prev, patterns, math_symbols)
    return out


def filter_records(
    records: Iterable[LimitationRecord],
    min_words: int = MIN_WORDS,
    patterns: Sequence[re.Pattern[str]] | None = None,
    math_symbols: frozenset[str] | None = None,
) -> list[CleanRecord]:
    """Clean each record and drop those below the word-count threshold.

    A record with exactly ``min_words`` words is kept ("less than" is literal).
    Input order is preserved.
    """
    out: list[CleanRecord] = []
    for rec in records:
        cleaned = clean_text(rec.text, patterns=patterns, math_symbols=math_symbols)
        count = len(cleaned.split())
        if count < min_words:
            continue
        out.append(CleanRecord(doc_id=rec.doc_id, text=cleaned, word_count=count))
    return out
