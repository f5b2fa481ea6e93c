"""Quantitative evaluation: silhouette, NPMI coherence, ROUGE, BLEU, embedding
recall, and judge-score aggregation.

Every text metric shares one tokenizer (lowercase, word boundaries,
punctuation stripped) so scores are mutually consistent.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .embed import EmbeddingMatrix, stub_embed
from .errors import MetricUndefinedError
from .llm import JUDGE_METRICS, JudgeScores
from .textutil import tokenize

log = logging.getLogger(__name__)


def silhouette(embeddings: EmbeddingMatrix | np.ndarray, assignments: Sequence[int]) -> float:
    """Mean of (b - a) / max(a, b) under cosine distance; outliers (-1) excluded.

    Points in singleton clusters score 0 by convention. At least two clusters
    must remain after outlier removal.
    """
    rows = embeddings.rows if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    labels = np.asarray(list(assignments), dtype=int)
    keep = labels != -1
    X = rows[keep]
    labels = labels[keep]
    unique = np.unique(labels)
    if len(unique) < 2:
        raise MetricUndefinedError(f"silhouette needs >= 2 clusters, got {len(unique)}")

    dist = 1.0 - np.clip(X @ X.T, -1.0, 1.0)
    members = {int(c): np.nonzero(labels == c)[0] for c in unique}
    scores = np.zeros(len(X))
    for i in range(len(X)):
        own = members[int(labels[i])]
        if len(own) == 1:
            continue
        a = dist[i, own].sum() / (len(own) - 1)
        b = min(
            float(dist[i, members[int(c)]].mean()) for c in unique if int(c) != int(labels[i])
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


@dataclass
class CoherenceResult:
    per_topic: list[float | None]
    mean: float | None


def _windows(tokens: list[str], window: int):
    if len(tokens) <= window:
        yield tokens
        return
    for start in range(len(tokens) - window + 1):
        yield tokens[start : start + window]


def coherence_npmi(
    topics_words: Sequence[Sequence[str]],
    reference_texts: Sequence[str],
    window: int = 10,
    eps: float = 1e-12,
) -> CoherenceResult:
    """Sliding-window NPMI coherence over each topic's word pairs.

    Boolean co-occurrence is counted per window; NPMI(i, j) =
    log(P(i,j) / (P(i) P(j))) / (-log P(i,j)) with additive eps smoothing.
    Pairs with a word absent from the reference are skipped; a topic whose
    pairs are all skipped is excluded from the mean with a warning.
    """
    if not reference_texts:
        raise ValueError("reference corpus is empty")
    relevant = {w for words in topics_words for w in words}
    word_hits: Counter[str] = Counter()
    pair_hits: Counter[tuple[str, str]] = Counter()
    total_windows = 0
    for text in reference_texts:
        for win in _windows(tokenize(text), window):
            total_windows += 1
            present = sorted(relevant.intersection(win))
            word_hits.update(present)
            pair_hits.update(combinations(present, 2))

    per_topic: list[float | None] = []
    for words in topics_words:
        if not words:
            per_topic.append(None)
            continue
        values = []
        for a, b in combinations(words, 2):
            if word_hits[a] == 0 or word_hits[b] == 0:
                continue
            key = (a, b) if a <= b else (b, a)
            n_ij = pair_hits[key]
            if n_ij == total_windows:
                values.append(1.0)  # perfect association; 0/0 in the formula
                continue
            p_i = word_hits[a] / total_windows
            p_j = word_hits[b] / total_windows
            p_ij = n_ij / total_windows
            values.append(math.log((p_ij + eps) / (p_i * p_j)) / (-math.log(p_ij + eps)))
        if not values:
            log.warning("coherence undefined for topic %r: all pairs skipped", list(words)[:3])
            per_topic.append(None)
        else:
            per_topic.append(sum(values) / len(values))
    defined = [v for v in per_topic if v is not None]
    return CoherenceResult(per_topic=per_topic, mean=sum(defined) / len(defined) if defined else None)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    flagged: bool = False


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngrams(tokens: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> PRF:
    """Clipped n-gram overlap precision/recall/F1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if len(cand) < n or len(ref) < n:
        return PRF(0.0, 0.0, 0.0, flagged=True)
    cand_grams = _ngrams(cand, n)
    ref_grams = _ngrams(ref, n)
    overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
    precision = overlap / sum(cand_grams.values())
    recall = overlap / sum(ref_grams.values())
    return PRF(precision, recall, _f1(precision, recall))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> PRF:
    """Longest-common-subsequence precision/recall/F1."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return PRF(0.0, 0.0, 0.0, flagged=True)
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return PRF(precision, recall, _f1(precision, recall))


def bleu(candidate: str, reference: str, max_n: int = 4) -> float:
    """Geometric mean of modified n-gram precisions with a brevity penalty.

    Zero n-gram matches get add-1 smoothing: 1 / (possible + 1). Orders where
    the candidate has no n-grams at all are skipped.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    used = 0
    for n in range(1, max_n + 1):
        cand_grams = _ngrams(cand, n)
        total = sum(cand_grams.values())
        if total == 0:
            continue
        ref_grams = _ngrams(ref, n)
        overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
        p = overlap / total if overlap > 0 else 1.0 / (total + 1.0)
        log_sum += math.log(p)
        used += 1
    if used == 0:
        return 0.0
    geo_mean = math.exp(log_sum / used)
    brevity = math.exp(1.0 - len(ref) / len(cand)) if len(cand) < len(ref) else 1.0
    return geo_mean * brevity


TokenEmbedder = Callable[[str], np.ndarray]


def stub_token_embedder(dimension: int = 64, seed: int = 0) -> TokenEmbedder:
    return lambda token: stub_embed(token, dimension, seed)


def bertscore_recall(candidate: str, reference: str, token_embedder: TokenEmbedder) -> float:
    """Greedy-matching recall: mean over reference tokens of the max cosine to
    any candidate token. No idf weighting, no baseline rescaling."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        raise MetricUndefinedError("both texts must tokenize to at least one token")
    vectors = {tok: token_embedder(tok) for tok in set(cand) | set(ref)}
    cand_matrix = np.vstack([vectors[t] for t in cand])
    total = 0.0
    for tok in ref:
        sims = cand_matrix @ vectors[tok]
        total += float(np.clip(sims, -1.0, 1.0).max())
    return float(min(max(total / len(ref), 0.0), 1.0))


def sample_judged(n_items: int, sample_size: int, seed: int) -> list[int]:
    """Deterministic seeded sample of summary indices, sorted ascending."""
    if sample_size > n_items:
        raise ValueError(f"sample_size {sample_size} exceeds available {n_items}")
    rng = np.random.Generator(np.random.PCG64(seed))
    picked = rng.choice(n_items, size=sample_size, replace=False)
    return sorted(int(i) for i in picked)


def aggregate_judge(
    scores: Sequence[tuple[str, JudgeScores]],
    sample_size: int | None = None,
    seed: int = 0,
) -> dict[str, dict[str, float]]:
    """Per-model means of the nine judge metrics.

    Scores from several judges for the same model pool into one group, so the
    group mean is the cross-judge mean. When ``sample_size`` is given, each
    group is sampled with the same seeded indices (groups must be equal-sized).
    """
    if not scores:
        raise ValueError("no judge scores to aggregate")
    groups: dict[str, list[JudgeScores]] = {}
    for tag, judge_scores in scores:
        groups.setdefault(tag, []).append(judge_scores)
    if sample_size is not None:
        lengths = {len(g) for g in groups.values()}
        if len(lengths) > 1:
            raise ValueError("sampled aggregation requires equal-sized score groups")
        indices = sample_judged(lengths.pop(), sample_size, seed)
        groups = {tag: [g[i] for i in indices] for tag, g in groups.items()}
    out: dict[str, dict[str, float]] = {}
    for tag, group in groups.items():
        out[tag] = {
            metric: sum(getattr(s, metric) for s in group) / len(group)
            for metric in JUDGE_METRICS
        }
    return out


@dataclass
class MetricReport:
    """Per-topic metric values plus corpus-level values and aggregates."""

    per_topic: dict[str, dict[int, float]]
    corpus: dict[str, float]
    params: dict[str, object] = field(default_factory=dict)
    aggregates: dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        per_topic: dict[str, dict[int, float]],
        corpus: dict[str, float],
        params: dict[str, object] | None = None,
    ) -> "MetricReport":
        aggregates = {
            metric: sum(values.values()) / len(values)
            for metric, values in per_topic.items()
            if values
        }
        return cls(per_topic=per_topic, corpus=corpus, params=params or {}, aggregates=aggregates)

    def csv_rows(self) -> list[tuple[str, str, str]]:
        rows: list[tuple[str, str, str]] = []
        for metric in sorted(self.per_topic):
            for topic_id in sorted(self.per_topic[metric]):
                rows.append((str(topic_id), metric, f"{self.per_topic[metric][topic_id]:.9f}"))
            if metric in self.aggregates:
                rows.append(("mean", metric, f"{self.aggregates[metric]:.9f}"))
        for metric in sorted(self.corpus):
            rows.append(("corpus", metric, f"{self.corpus[metric]:.9f}"))
        return rows
