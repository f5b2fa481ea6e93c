"""Shared text primitives: one tokenizer and one sentence splitter for the whole pipeline."""
from __future__ import annotations

import math
import re

_WORD_RE = re.compile(r"\w+", re.UNICODE)
# boundary: terminal punctuation, optional closing quote/bracket, whitespace,
# then an uppercase letter or an opening quote
_SENT_BOUNDARY_RE = re.compile(r"[.!?]+[\"')\]]*\s+(?=[A-Z\"'])")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens at word boundaries; punctuation dropped."""
    return _WORD_RE.findall(text.lower())


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) character spans of sentences; the last span runs to len(text)."""
    spans: list[tuple[int, int]] = []
    start = 0
    for m in _SENT_BOUNDARY_RE.finditer(text):
        spans.append((start, m.end()))
        start = m.end()
    if start < len(text):
        spans.append((start, len(text)))
    return [(s, e) for s, e in spans if text[s:e].strip()]


def split_sentences(text: str) -> list[str]:
    return [text[s:e].strip() for s, e in sentence_spans(text)]


def approx_tokens(text: str) -> int:
    # chars/4: provider-agnostic budget approximation used when no tokenizer exists
    return math.ceil(len(text) / 4)
