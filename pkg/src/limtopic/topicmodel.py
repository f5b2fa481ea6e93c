"""Guided spherical k-means topic modeling with class-based TF-IDF topic words.

Clustering runs on unit-norm embeddings with cosine similarity: one initial
centroid per seed phrase, zero-shot pre-assignment of records close to a seed,
Lloyd iterations to a fixpoint, an auto-split rule that grows the topic count
when one cluster dominates, and dissolution of undersized clusters into their
nearest survivor or the outlier topic (-1).
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embed import EmbeddingMatrix, EmbeddingProvider, VectorCache, embed_batch
from .errors import ConfigError, ContractError
from .preprocess import CleanRecord
from .textutil import tokenize

log = logging.getLogger(__name__)

_DATA = Path(__file__).resolve().parent / "data"

OUTLIER_TOPIC = -1


@dataclass(frozen=True)
class TopicModelConfig:
    min_topic_size: int = 10
    zero_shot_min_similarity: float = 0.75
    target_topic_count: int | None = None  # None = auto (split up to max_auto_topics)
    max_auto_topics: int = 35
    n_top_words: int = 10
    n_representative_docs: int = 4
    random_seed: int = 0
    reduction: str = "none"  # none | pca
    pca_components: int = 7
    max_iterations: int = 300

    def validate(self) -> None:
        if self.min_topic_size < 2:
            raise ConfigError("min_topic_size must be >= 2")
        if not 0.0 <= self.zero_shot_min_similarity <= 1.0:
            raise ConfigError("zero_shot_min_similarity must be in [0, 1]")
        if self.reduction not in ("none", "pca"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")
        if self.reduction == "pca" and self.pca_components < 1:
            raise ConfigError("pca_components must be >= 1")
        if self.n_top_words < 1 or self.n_representative_docs < 1:
            raise ConfigError("n_top_words and n_representative_docs must be >= 1")


@dataclass
class SeedTopicList:
    """Non-empty seed phrases, deduplicated case-insensitively (first casing wins)."""

    phrases: list[str]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        unique: list[str] = []
        for phrase in self.phrases:
            phrase = phrase.strip()
            if not phrase:
                continue
            key = phrase.lower()
            if key in seen:
                continue
            seen.add(key)
            unique.append(phrase)
        if not unique:
            raise ConfigError("seed topic list is empty")
        self.phrases = unique

    @classmethod
    def from_file(cls, path: str | Path) -> "SeedTopicList":
        phrases = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                phrases.append(line)
        return cls(phrases)

    @classmethod
    def default(cls) -> "SeedTopicList":
        return cls.from_file(_DATA / "seed_words.txt")


@dataclass
class Topic:
    topic_id: int
    member_ids: list[str]
    centroid: np.ndarray
    topic_words: list[tuple[str, float]] = field(default_factory=list)
    representative_text: str = ""
    title: str = ""
    summary: str = ""
    rank: int = 0

    @property
    def size(self) -> int:
        return len(self.member_ids)


@dataclass
class TopicModel:
    topics: list[Topic]
    assignments: dict[str, int]
    vocabulary: list[str]
    config: TopicModelConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def outlier_ids(self) -> list[str]:
        return [doc_id for doc_id, t in self.assignments.items() if t == OUTLIER_TOPIC]


@lru_cache(maxsize=1)
def load_stopwords(path: str | None = None) -> frozenset[str]:
    src = Path(path) if path else _DATA / "stopwords.txt"
    words = set()
    for line in src.read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


def build_vocabulary(
    records: Sequence[CleanRecord],
    stopwords: Iterable[str],
    min_df: int = 1,
) -> list[str]:
    """Lowercase unigram vocabulary: stopwords out, document frequency >= min_df, sorted."""
    if not records:
        raise ValueError("cannot build a vocabulary from zero records")
    stop = set(stopwords)
    df: Counter[str] = Counter()
    for rec in records:
        df.update({t for t in tokenize(rec.text) if t not in stop})
    vocab = sorted(t for t, c in df.items() if c >= min_df)
    if not vocab:
        raise ValueError("vocabulary is empty after stopword and frequency filtering")
    return vocab


def _fit_pca(X: np.ndarray, n_components: int) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    _, _, vt = np.linalg.svd(X - mean, full_matrices=False)
    return mean, vt[: min(n_components, vt.shape[0])]


def _pca_project(X: np.ndarray, mean: np.ndarray, components: np.ndarray) -> np.ndarray:
    Y = (X - mean) @ components.T
    norms = np.linalg.norm(Y, axis=1, keepdims=True)
    # points collapsing onto the mean get a fixed unit direction
    degenerate = norms[:, 0] < 1e-12
    if degenerate.any():
        Y[degenerate] = 0.0
        Y[degenerate, 0] = 1.0
        norms = np.linalg.norm(Y, axis=1, keepdims=True)
    return Y / norms


def _update_centroids(X: np.ndarray, assign: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = centroids.copy()
    for j in range(centroids.shape[0]):
        members = X[assign == j]
        if len(members):
            total = members.sum(axis=0)
            norm = float(np.linalg.norm(total))
            if norm > 1e-12:
                out[j] = total / norm
    return out


def _lloyd(
    X: np.ndarray,
    assign: np.ndarray,
    centroids: np.ndarray,
    max_iterations: int,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    trace: list[float] = []
    for _ in range(max_iterations):
        sims = X @ centroids.T
        new_assign = sims.argmax(axis=1)
        trace.append(float(sims[np.arange(len(X)), new_assign].mean()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centroids = _update_centroids(X, assign, centroids)
    return assign, centroids, trace


def _kmeanspp_extend(
    X: np.ndarray, centroids: np.ndarray, extra: int, rng: np.random.Generator
) -> np.ndarray:
    out = centroids
    for _ in range(extra):
        dist = 1.0 - np.clip(X @ out.T, -1.0, 1.0).max(axis=1)
        weights = dist**2
        total = float(weights.sum())
        if total <= 0.0:
            idx = int(rng.integers(len(X)))
        else:
            idx = int(rng.choice(len(X), p=weights / total))
        out = np.vstack([out, X[idx]])
    return out


def _split_two(members: np.ndarray, max_iterations: int) -> tuple[np.ndarray, np.ndarray] | None:
    """Two-means on one cluster's members; None when the cluster cannot split."""
    centroid = members.sum(axis=0)
    centroid /= max(float(np.linalg.norm(centroid)), 1e-12)
    i0 = int((members @ centroid).argmin())
    i1 = int((members @ members[i0]).argmin())
    if i0 == i1:
        return None
    pair = np.vstack([members[i0], members[i1]])
    assign = (members @ pair.T).argmax(axis=1)
    assign, pair, _ = _lloyd(members, assign, pair, max_iterations)
    if len(np.unique(assign)) < 2:
        return None
    return pair[0], pair[1]


def fit(
    records: Sequence[CleanRecord],
    embeddings: EmbeddingMatrix,
    seeds: SeedTopicList,
    seed_embeddings: EmbeddingMatrix,
    config: TopicModelConfig,
    vocabulary: list[str] | None = None,
    stopwords: Iterable[str] | None = None,
    min_df: int = 1,
) -> TopicModel:
    """Cluster records into topics guided by seed phrases.

    Records and embedding rows must be aligned, and seed embeddings must come
    from the same provider as the record embeddings.
    """
    config.validate()
    n = len(records)
    X = np.asarray(embeddings.rows, dtype=np.float64)
    if X.shape[0] != n:
        raise ContractError(f"{n} records but {X.shape[0]} embedding rows")
    if embeddings.provider_id != seed_embeddings.provider_id:
        raise ContractError(
            f"records embedded with {embeddings.provider_id!r} but seeds with "
            f"{seed_embeddings.provider_id!r}"
        )
    S = np.asarray(seed_embeddings.rows, dtype=np.float64)
    if S.shape[0] != len(seeds.phrases):
        raise ContractError(f"{len(seeds.phrases)} seed phrases but {S.shape[0]} seed embeddings")
    if n < len(seeds.phrases):
        raise ConfigError(f"{n} records cannot support {len(seeds.phrases)} seed topics")

    if config.reduction == "pca":
        mean, components = _fit_pca(X, config.pca_components)
        X = _pca_project(X, mean, components)
        S = _pca_project(S, mean, components)

    rng = np.random.default_rng(config.random_seed)
    centroids = S.copy()
    if config.target_topic_count is not None:
        if config.target_topic_count < len(S):
            raise ConfigError(
                f"target_topic_count {config.target_topic_count} is below the "
                f"seed count {len(S)}"
            )
        if config.target_topic_count > len(S):
            centroids = _kmeanspp_extend(X, centroids, config.target_topic_count - len(S), rng)

    # zero-shot pre-assignment: records close to a seed start locked to it
    seed_sims = X @ S.T
    best_seed = seed_sims.argmax(axis=1)
    locked = seed_sims.max(axis=1) >= config.zero_shot_min_similarity

    assign = (X @ centroids.T).argmax(axis=1)
    assign[locked] = best_seed[locked]
    centroids = _update_centroids(X, assign, centroids)

    traces: list[list[float]] = []
    assign, centroids, trace = _lloyd(X, assign, centroids, config.max_iterations)
    traces.append(trace)

    splits = 0
    if config.target_topic_count is None:
        while centroids.shape[0] < config.max_auto_topics:
            sizes = np.bincount(assign, minlength=centroids.shape[0])
            nonempty = sizes[sizes > 0]
            if len(nonempty) < 1:
                break
            largest = int(sizes.argmax())
            if sizes[largest] <= 3 * float(np.median(nonempty)):
                break
            split = _split_two(X[assign == largest], config.max_iterations)
            if split is None:
                break
            centroids[largest] = split[0]
            centroids = np.vstack([centroids, split[1]])
            assign = (X @ centroids.T).argmax(axis=1)
            centroids = _update_centroids(X, assign, centroids)
            assign, centroids, trace = _lloyd(X, assign, centroids, config.max_iterations)
            traces.append(trace)
            splits += 1

    # dissolve undersized clusters into the nearest survivor or the outlier topic
    k = centroids.shape[0]
    sizes = np.bincount(assign, minlength=k)
    survivors = [j for j in range(k) if sizes[j] >= config.min_topic_size]
    outlier_floor = config.zero_shot_min_similarity / 2.0
    final = np.full(n, OUTLIER_TOPIC, dtype=int)
    if survivors:
        survivor_pos = {j: p for p, j in enumerate(survivors)}
        surv_c = centroids[survivors]
        for i in range(n):
            j = int(assign[i])
            if j in survivor_pos:
                final[i] = survivor_pos[j]
            else:
                sims = X[i] @ surv_c.T
                best = int(sims.argmax())
                if float(sims[best]) >= outlier_floor:
                    final[i] = best
    # else: nothing met min_topic_size and every record becomes an outlier

    # rank by final member count (largest = rank 1); ties keep original cluster order
    counts = [int((final == p).sum()) for p in range(len(survivors))]
    order = sorted(range(len(survivors)), key=lambda p: (-counts[p], survivors[p]))
    relabel = {old: new for new, old in enumerate(order)}

    topics: list[Topic] = []
    assignments: dict[str, int] = {}
    members_by_topic: dict[int, list[int]] = {t: [] for t in range(len(survivors))}
    for i, rec in enumerate(records):
        t = relabel[final[i]] if final[i] != OUTLIER_TOPIC else OUTLIER_TOPIC
        assignments[rec.doc_id] = t
        if t != OUTLIER_TOPIC:
            members_by_topic[t].append(i)
    for t in range(len(survivors)):
        rows = members_by_topic[t]
        total = X[rows].sum(axis=0)
        centroid = total / max(float(np.linalg.norm(total)), 1e-12)
        topics.append(
            Topic(
                topic_id=t,
                member_ids=[records[i].doc_id for i in rows],
                centroid=centroid,
                rank=t + 1,
            )
        )

    if stopwords is None:
        stopwords = load_stopwords()
    if vocabulary is None:
        vocabulary = build_vocabulary(records, stopwords, min_df=min_df)

    model = TopicModel(
        topics=topics,
        assignments=assignments,
        vocabulary=vocabulary,
        config=config,
        diagnostics={
            "objective_traces": traces,
            "n_locked": int(locked.sum()),
            "splits": splits,
            "k_final": len(survivors),
            "n_outliers": int((final == OUTLIER_TOPIC).sum()),
        },
    )
    words = ctfidf(model, records)
    for topic in model.topics:
        topic.topic_words = words.get(topic.topic_id, [])
        topic.representative_text = representative_docs(
            topic, records, X, config.n_representative_docs
        )
    return model


def ctfidf(
    model: TopicModel, records: Sequence[CleanRecord]
) -> dict[int, list[tuple[str, float]]]:
    """Class-based TF-IDF topic words: W(t,c) = tf(t,c) * log(1 + A / f(t)).

    tf counts term occurrences inside the class (a topic's concatenated member
    texts), f(t) is the term's total count across classes, and A is the mean
    vocabulary-token count per class. Top words are sorted by weight, ties
    broken lexicographically.
    """
    topics = [t for t in model.topics if t.topic_id != OUTLIER_TOPIC]
    if not topics:
        return {}
    texts = {r.doc_id: r.text for r in records}
    vocab = model.vocabulary
    index = {w: i for i, w in enumerate(vocab)}
    tf = np.zeros((len(topics), len(vocab)), dtype=np.float64)
    for row, topic in enumerate(topics):
        for doc_id in topic.member_ids:
            for tok in tokenize(texts[doc_id]):
                col = index.get(tok)
                if col is not None:
                    tf[row, col] += 1.0

    mean_class_tokens = float(tf.sum()) / len(topics)
    totals = tf.sum(axis=0)
    safe_totals = np.where(totals > 0, totals, 1.0)
    weights = tf * np.log1p(mean_class_tokens / safe_totals)

    out: dict[int, list[tuple[str, float]]] = {}
    for row, topic in enumerate(topics):
        present = np.nonzero(tf[row] > 0)[0]
        if len(present) == 0:
            log.warning("topic %d has an empty class; no topic words", topic.topic_id)
            out[topic.topic_id] = []
            continue
        ranked = sorted(
            ((vocab[i], float(weights[row, i])) for i in present),
            key=lambda item: (-item[1], item[0]),
        )
        out[topic.topic_id] = ranked[: model.config.n_top_words]
    return out


def representative_docs(
    topic: Topic,
    records: Sequence[CleanRecord],
    embeddings: EmbeddingMatrix | np.ndarray,
    n: int,
) -> str:
    """The topic's n most central member texts, joined in similarity order.

    Ties on cosine fall back to the lower record id.
    """
    rows = embeddings.rows if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    row_of = {rec.doc_id: i for i, rec in enumerate(records)}
    scored = sorted(
        topic.member_ids,
        key=lambda doc_id: (-float(rows[row_of[doc_id]] @ topic.centroid), doc_id),
    )
    chosen = scored[: max(n, 1)]
    texts = {r.doc_id: r.text for r in records}
    return "\n".join(texts[doc_id] for doc_id in chosen)


def keybert_keywords(
    representative_text: str,
    vocabulary: Sequence[str],
    provider: EmbeddingProvider,
    n: int,
    cache: VectorCache | None = None,
) -> list[tuple[str, float]]:
    """Re-extract keywords: vocabulary terms in the text, ranked by cosine to the full text."""
    if not representative_text.strip():
        raise ValueError("representative text is empty")
    present = set(tokenize(representative_text))
    candidates = [w for w in vocabulary if w in present]
    if not candidates:
        log.warning("no vocabulary term occurs in the representative text")
        return []
    matrix = embed_batch([representative_text] + candidates, provider, cache)
    text_vec = matrix.rows[0]
    sims = matrix.rows[1:] @ text_vec
    ranked = sorted(
        zip(candidates, (float(s) for s in sims)),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[:n]
