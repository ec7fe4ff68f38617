"""Text embedding backends and the cosine kernel.

Vectors are plain ``numpy`` float64 arrays normalized to unit length when
they are created, so cosine similarity is a dot product everywhere else.
"""
from __future__ import annotations

import hashlib
import logging
import os
import threading
import time

import numpy as np
import requests

from .text import tokenize

log = logging.getLogger(__name__)


class EmbeddingError(Exception):
    pass


class DimensionMismatch(EmbeddingError, ValueError):
    pass


class EmbeddingTransportError(EmbeddingError):
    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


def unit_vector(values, dim: int | None = None) -> np.ndarray:
    """Return ``values`` as a unit-norm float64 vector.

    Raises ValueError for zero or non-finite input and DimensionMismatch when
    ``dim`` is given and does not match.
    """
    vec = np.asarray(values, dtype=np.float64).reshape(-1)
    if dim is not None and vec.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {vec.shape[0]}")
    norm = float(np.linalg.norm(vec))
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return vec / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two unit vectors.

    Elementwise product followed by a sum is exactly symmetric in its
    operands (unlike BLAS dot). The result is clipped to [-1, 1].
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")
    value = float(np.sum(a * b))
    return min(1.0, max(-1.0, value))


def _check_text(text: str) -> str:
    if not isinstance(text, str) or not text.strip():
        raise ValueError("cannot embed empty text")
    return text


class HashingEmbedder:
    """Deterministic bag-of-n-grams embedder for hermetic tests.

    Word unigrams and bigrams are hashed with BLAKE2b into ``dim`` signed
    buckets. The hash is independent of Python's per-process salt, so vectors
    are identical across runs and platforms.
    """

    kind = "deterministic_test"

    def __init__(self, dim: int = 384, bigram_weight: float = 0.5):
        if dim < 2:
            raise ValueError("dimension must be at least 2")
        self.dim = dim
        self.bigram_weight = bigram_weight

    def _bucket(self, feature: str) -> tuple[int, float]:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
        raw = int.from_bytes(digest, "little")
        return raw % self.dim, (1.0 if (raw >> 63) & 1 else -1.0)

    def embed_text(self, text: str) -> np.ndarray:
        _check_text(text)
        tokens = tokenize(text)
        vec = np.zeros(self.dim)
        features = [(t, 1.0) for t in tokens]
        features += [(f"{a} {b}", self.bigram_weight) for a, b in zip(tokens, tokens[1:])]
        if not features:
            # punctuation-only input: fall back to the raw characters
            features = [(text.strip(), 1.0)]
        for feature, weight in features:
            index, sign = self._bucket(feature)
            vec[index] += sign * weight
        if not vec.any():
            index, sign = self._bucket("\x00" + text)
            vec[index] = sign
        return unit_vector(vec)

    def embed_texts(self, texts) -> list[np.ndarray]:
        return [self.embed_text(t) for t in texts]


class RemoteEmbedder:
    """Client for a JSON embedding endpoint.

    Request ``{"model": ..., "input": [texts]}``, response
    ``{"data": [{"embedding": [...]}, ...]}``. Failures are retried with
    exponential backoff.
    """

    kind = "remote_http"

    def __init__(
        self,
        url: str,
        dim: int,
        model: str = "all-MiniLM-L6-v2",
        api_key_env: str = "EMBEDDINGS_API_KEY",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.dim = dim
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def embed_texts(self, texts) -> list[np.ndarray]:
        texts = [_check_text(t) for t in texts]
        payload = {"model": self.model, "input": texts}
        attempts = 0
        last_error: Exception | None = None
        while attempts <= self.max_retries:
            attempts += 1
            try:
                with self._slots:
                    response = self._session.post(
                        self.url, json=payload, headers=self._headers(), timeout=self.timeout
                    )
                response.raise_for_status()
                data = response.json()["data"]
                if len(data) != len(texts):
                    raise EmbeddingError(f"expected {len(texts)} embeddings, got {len(data)}")
                return [unit_vector(item["embedding"], self.dim) for item in data]
            except DimensionMismatch:
                raise
            except (requests.RequestException, KeyError, TypeError, ValueError, EmbeddingError) as exc:
                last_error = exc
                log.warning("embedding request failed (attempt %d): %s", attempts, exc)
                if attempts <= self.max_retries:
                    time.sleep(self.backoff * 2 ** (attempts - 1))
        raise EmbeddingTransportError(
            f"embedding endpoint failed after {attempts} attempts: {last_error}", attempts
        )

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_texts([text])[0]
