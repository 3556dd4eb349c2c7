"""Deterministic text embeddings and cosine similarity.

The default backend is a hashed bag-of-words embedder: tokens are hashed
with a fixed, salted 64-bit hash into a fixed number of buckets, counts
accumulated, and the vector L2-normalized. It is fully deterministic
across processes and platforms, which makes every retrieval decision
reproducible offline. A remote provider can be plugged in for production
via environment variables (see RemoteEmbedder).
"""

from __future__ import annotations

import hashlib
import os
import re

import numpy as np

from .errors import DimensionMismatch, EmptyText, ProviderError, ZeroVector

DEFAULT_DIM = 256

# Fixed salt so bucket assignment never depends on interpreter hash seeds.
_HASH_SALT = b"saycomply-bow-v1"
_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")

EMBED_URL_ENV = "SAYCOMPLY_EMBED_URL"
EMBED_MODEL_ENV = "SAYCOMPLY_EMBED_MODEL"
EMBED_API_KEY_ENV = "SAYCOMPLY_EMBED_API_KEY"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; drops empty tokens."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, salt=_HASH_SALT).digest()
    return int.from_bytes(digest, "big") % dim


class HashedBowEmbedder:
    """Hashed bag-of-words embedder with a fixed seed.

    Word order does not matter; repeated tokens accumulate counts before
    normalization. Embedding the same text always yields bitwise-identical
    vectors.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText(f"no alphanumeric tokens in {text!r}")
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            vec[_bucket(token, self.dim)] += 1.0
        return vec / np.linalg.norm(vec)


class RemoteEmbedder:
    """Embedding provider backed by an HTTP endpoint.

    Configured through SAYCOMPLY_EMBED_URL / SAYCOMPLY_EMBED_MODEL /
    SAYCOMPLY_EMBED_API_KEY. The wire format is a JSON POST
    ``{"input": [<text>, ...]}`` answered by ``{"vectors": [[...], ...]}``.
    Returned vectors are re-normalized before use. Stateless and safe to
    share across callers; the client pool caps in-flight requests.
    """

    def __init__(
        self,
        url: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        dim: int = DEFAULT_DIM,
        max_connections: int = 4,
        retries: int = 3,
        transport=None,
    ):
        import httpx

        self.url = url or os.environ.get(EMBED_URL_ENV, "")
        self.model = model or os.environ.get(EMBED_MODEL_ENV, "")
        self.api_key = api_key or os.environ.get(EMBED_API_KEY_ENV, "")
        self.dim = dim
        self.retries = retries
        if not self.url:
            raise ProviderError(f"{EMBED_URL_ENV} is not configured")
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(
            headers=headers,
            limits=httpx.Limits(max_connections=max_connections),
            transport=transport,
            timeout=30.0,
        )

    def embed(self, text: str) -> np.ndarray:
        if not tokenize(text):
            raise EmptyText(f"no alphanumeric tokens in {text!r}")
        payload: dict = {"input": [text]}
        if self.model:
            payload["model"] = self.model
        last_error: Exception | None = None
        for _ in range(self.retries):
            try:
                resp = self._client.post(self.url, json=payload)
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                vec = np.asarray(vectors[0], dtype=np.float64)
                norm = np.linalg.norm(vec)
                if vec.size == 0 or norm == 0.0:
                    raise ProviderError("provider returned an empty or zero vector")
                return vec / norm
            except ProviderError:
                raise
            except Exception as exc:  # network / schema failures are retried
                last_error = exc
        raise ProviderError(f"embedding provider failed after {self.retries} attempts: {last_error}")


def embedder_from_env(dim: int = DEFAULT_DIM):
    """Remote embedder when SAYCOMPLY_EMBED_URL is set, hashed otherwise."""
    if os.environ.get(EMBED_URL_ENV):
        return RemoteEmbedder(dim=dim)
    return HashedBowEmbedder(dim=dim)


_default_embedder = HashedBowEmbedder()


def embed_text(text: str) -> np.ndarray:
    """Embed with the default hashed bag-of-words backend (d=256)."""
    return _default_embedder.embed(text)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1] against float rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(a.shape[0] if a.ndim else 0, b.shape[0] if b.ndim else 0)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity with a zero vector")
    return float(min(1.0, max(-1.0, float(np.dot(a, b)) / (norm_a * norm_b))))
