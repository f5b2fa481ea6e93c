"""Embedding providers, a content-addressed vector cache, and batch embedding.

All vectors are L2-normalized at ingestion so cosine similarity reduces to a
dot product everywhere downstream. Cache keys are SHA-256 over
``provider_id || text``; the provider id embeds the model name, so swapping
models never aliases cache entries.
"""
from __future__ import annotations

import hashlib
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import ConfigError, ContractError, TransportError
from .textutil import tokenize

_NORM_TOL = 1e-6


def stub_embed(text: str, dimension: int, seed: int = 0) -> np.ndarray:
    """Deterministic hashed bag-of-words embedding for offline runs.

    Each token is hashed (with the seed) to a bucket index and a sign,
    accumulated, and the result L2-normalized. Equal token multisets give
    equal vectors.
    """
    if dimension < 2:
        raise ValueError(f"dimension must be >= 2, got {dimension}")
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("cannot embed text with an empty token set")
    vec = np.zeros(dimension, dtype=np.float64)
    for tok in tokens:
        digest = hashlib.sha256(f"{seed}:{tok}".encode("utf-8")).digest()
        h = int.from_bytes(digest[:8], "big")
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        vec[h % dimension] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("token hashes cancelled out to a zero vector")
    return vec / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of unit vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.clip(np.dot(u, v), -1.0, 1.0))


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Unit-norm embedding rows aligned 1:1 with an input text list."""

    rows: np.ndarray
    provider_id: str
    dimension: int

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[1] != self.dimension:
            raise ContractError(
                f"matrix shape {self.rows.shape} does not match dimension {self.dimension}"
            )

    def __len__(self) -> int:
        return int(self.rows.shape[0])


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int
    batch_limit: int

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


class StubEmbeddingProvider:
    """Offline provider backed by stub_embed; counts calls for cache tests."""

    def __init__(self, dimension: int = 64, seed: int = 0, batch_limit: int = 128):
        self.dimension = dimension
        self.seed = seed
        self.batch_limit = batch_limit
        self.provider_id = f"stub:{dimension}:{seed}"
        self.calls = 0

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [stub_embed(t, self.dimension, self.seed).tolist() for t in texts]


class HttpEmbeddingProvider:
    """OpenAI-compatible embeddings endpoint client."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        api_key_env: str = "LIMTOPIC_API_KEY",
        batch_limit: int = 100,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.api_key_env = api_key_env
        self.batch_limit = batch_limit
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.provider_id = f"openai:{model}"
        self.calls = 0

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        payload = {"model": self.model, "input": list(texts)}
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    f"{self.base_url}/embeddings",
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                data = resp.json()["data"]
                break
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_exc = exc
                if attempt < self.retries - 1:
                    time.sleep(self.backoff * (2**attempt))
        else:
            raise TransportError(f"embeddings endpoint failed after {self.retries} attempts: {last_exc}")
        rows = sorted(data, key=lambda d: d["index"])
        return [r["embedding"] for r in rows]


class VectorCache:
    """Content-addressed directory of binary vectors; concurrent readers, serialized writers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(provider_id: str, text: str) -> str:
        return hashlib.sha256(f"{provider_id}\x00{text}".encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.npy"

    def get(self, key: str) -> np.ndarray | None:
        path = self._path(key)
        if not path.exists():
            return None
        return np.load(path)

    def put(self, key: str, vector: np.ndarray) -> None:
        with self._write_lock:
            path = self._path(key)
            tmp = path.with_suffix(".tmp.npy")
            np.save(tmp, vector)
            tmp.replace(path)


def _normalize(raw: Sequence[float], dimension: int) -> np.ndarray:
    vec = np.asarray(raw, dtype=np.float64)
    if vec.shape != (dimension,):
        raise ContractError(f"provider returned dimension {vec.shape}, expected ({dimension},)")
    if not np.all(np.isfinite(vec)):
        raise ContractError("provider returned non-finite embedding values")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ContractError("provider returned a zero vector")
    return vec / norm


def embed_batch(
    texts: Sequence[str],
    provider: EmbeddingProvider,
    cache: VectorCache | None = None,
    max_parallel: int = 1,
) -> EmbeddingMatrix:
    """Embed texts through the cache, fetching misses in provider-sized batches.

    Row order always matches input order. A transport failure names the input
    indices whose embeddings could not be fetched.
    """
    if not texts:
        raise ValueError("empty batch")
    keys = [VectorCache.key(provider.provider_id, t) for t in texts]
    by_text: dict[str, np.ndarray] = {}
    if cache is not None:
        for text, key in zip(texts, keys):
            if text in by_text:
                continue
            hit = cache.get(key)
            if hit is not None:
                by_text[text] = hit

    misses: list[str] = []
    first_index: dict[str, int] = {}
    for i, text in enumerate(texts):
        if text not in by_text and text not in first_index:
            first_index[text] = i
            misses.append(text)

    if misses:
        batches = [
            misses[i : i + provider.batch_limit]
            for i in range(0, len(misses), provider.batch_limit)
        ]

        def fetch(batch: list[str]) -> list[np.ndarray]:
            try:
                raw = provider.embed(batch)
            except TransportError as exc:
                idxs = [first_index[t] for t in batch]
                raise TransportError(f"failed to embed input indices {idxs}: {exc}") from exc
            if len(raw) != len(batch):
                raise ContractError(
                    f"provider returned {len(raw)} rows for a batch of {len(batch)}"
                )
            return [_normalize(r, provider.dimension) for r in raw]

        if max_parallel > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=max_parallel) as pool:
                results = list(pool.map(fetch, batches))
        else:
            results = [fetch(b) for b in batches]
        for batch, vectors in zip(batches, results):
            for text, vec in zip(batch, vectors):
                by_text[text] = vec
                if cache is not None:
                    cache.put(VectorCache.key(provider.provider_id, text), vec)

    rows = np.vstack([by_text[t] for t in texts])
    return EmbeddingMatrix(rows=rows, provider_id=provider.provider_id, dimension=provider.dimension)
