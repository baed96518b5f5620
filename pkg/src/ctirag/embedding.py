"""Text embedders: a deterministic local hashed-token embedder and a remote
embedding-service client.

Both produce unit-length float32 vectors of a fixed dimension; embedding empty
or token-less text yields the all-zeros sentinel vector. Ingestion and queries
must use the same embedder instance so both sides live in the same space.
"""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np
import requests

DEFAULT_DIM = 384

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class EmbeddingError(Exception):
    pass


class RemoteUnavailable(EmbeddingError):
    pass


class RemoteMalformedResponse(EmbeddingError):
    pass


class Embedder(Protocol):
    dim: int

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: Iterable[str]) -> list[np.ndarray]: ...


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    value = _FNV64_OFFSET
    for byte in data:
        value ^= byte
        value = (value * _FNV64_PRIME) & _MASK64
    return value


def tokenize(text: str) -> list[str]:
    """Lowercase and extract maximal alphanumeric runs (underscore excluded)."""
    return _TOKEN_RE.findall(text.lower())


class HashedEmbedder:
    """Deterministic bag-of-hashed-tokens embedder.

    Each token is hashed with FNV-1a 64 over its UTF-8 bytes into one of
    ``dim`` buckets; bucket counts are L2-normalized. Identical text gives a
    bit-identical vector on any platform.
    """

    kind = "hashed-local"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        counts = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            counts[fnv1a64(token.encode("utf-8")) % self.dim] += 1.0
        norm = float(np.linalg.norm(counts))
        if norm == 0.0:
            return np.zeros(self.dim, dtype=np.float32)
        return (counts / norm).astype(np.float32)

    def embed_batch(self, texts: Iterable[str]) -> list[np.ndarray]:
        return [self.embed_text(text) for text in texts]


class RemoteEmbedder:
    """Client for a JSON-over-HTTP embedding service.

    Protocol: POST {"texts": [...]}, response {"vectors": [[...], ...]}.
    Anything else is RemoteMalformedResponse. Text is passed verbatim.
    """

    kind = "remote"

    def __init__(
        self,
        url: str,
        dim: int = DEFAULT_DIM,
        api_key_env: str | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 4,
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.url = url
        self.dim = dim
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._slots = threading.Semaphore(max_in_flight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "") if self.api_key_env else ""
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def embed_batch(self, texts: Iterable[str]) -> list[np.ndarray]:
        texts = list(texts)
        if not texts:
            return []
        with self._slots:
            try:
                response = requests.post(
                    self.url,
                    json={"texts": texts},
                    headers=self._headers(),
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                raise RemoteUnavailable(str(exc)) from exc
        if response.status_code != 200:
            raise RemoteUnavailable(f"embedding service returned HTTP {response.status_code}")
        try:
            payload = response.json()
            vectors = payload["vectors"]
            if not isinstance(vectors, list) or len(vectors) != len(texts):
                raise RemoteMalformedResponse(
                    f"expected {len(texts)} vectors, got {type(vectors).__name__}"
                )
            out = []
            for row in vectors:
                vec = np.asarray(row, dtype=np.float32)
                if vec.shape != (self.dim,):
                    raise RemoteMalformedResponse(f"vector of shape {vec.shape}, want ({self.dim},)")
                out.append(vec)
            return out
        except RemoteMalformedResponse:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteMalformedResponse(str(exc)) from exc

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hashed-local"
    dim: int = DEFAULT_DIM
    url: str = ""
    api_key_env: str | None = None
    timeout: float = 30.0
    max_in_flight: int = 4


def make_embedder(config: EmbedderConfig) -> Embedder:
    if config.kind == "hashed-local":
        return HashedEmbedder(dim=config.dim)
    if config.kind == "remote":
        if not config.url:
            raise ValueError("remote embedder requires a url")
        return RemoteEmbedder(
            url=config.url,
            dim=config.dim,
            api_key_env=config.api_key_env,
            timeout=config.timeout,
            max_in_flight=config.max_in_flight,
        )
    raise ValueError(f"unknown embedder kind {config.kind!r}")


def embedder_from_env(env: dict[str, str] | None = None) -> Embedder:
    """Build an embedder from CTIRAG_EMBED_* environment variables."""
    env = os.environ if env is None else env
    return make_embedder(
        EmbedderConfig(
            kind=env.get("CTIRAG_EMBEDDER_KIND", "hashed-local"),
            dim=int(env.get("CTIRAG_EMBED_DIM", str(DEFAULT_DIM))),
            url=env.get("CTIRAG_EMBED_URL", ""),
            api_key_env=env.get("CTIRAG_EMBED_API_KEY_ENV") or None,
            timeout=float(env.get("CTIRAG_EMBED_TIMEOUT", "30")),
        )
    )
