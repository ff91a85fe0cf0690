"""Embedding providers: deterministic local feature hashing plus a remote client.

The local provider exists so the whole pipeline runs offline and
reproducibly; the remote provider speaks the common embeddings wire shape
({"input": [text]} in, a vector array out) for drop-in use of a hosted
sentence encoder.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import DimensionMismatch, NoTokens, ProviderUnreachable

DEFAULT_DIM = 384
_TOKEN = re.compile(r"[a-z0-9]+")
_RETRY_ATTEMPTS = 3


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not np.isfinite(norm):
            raise NoTokens("embedding has zero norm")
        object.__setattr__(self, "values", v / norm)

    @property
    def dim(self) -> int:
        return len(self.values)

    def cosine(self, other: "EmbeddingVector") -> float:
        return float(np.dot(self.values, other.values))


def _feature_hash(feature: str) -> tuple[int, float]:
    """Stable (bucket seed, sign) for a token feature."""
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "little")
    sign = 1.0 if value & 1 else -1.0
    return value >> 1, sign


def hash_embed(text: str, dim: int = DEFAULT_DIM) -> EmbeddingVector:
    """Signed feature hashing of unigrams and adjacent-token bigrams.

    Repeated-token bigrams are skipped so pure repetition ("dogs dogs")
    stays parallel to the single token and normalizes to the same vector.
    """
    tokens = _TOKEN.findall(text.lower())
    if not tokens:
        raise NoTokens(f"no alphanumeric tokens in {text!r}")
    accum = np.zeros(dim)
    features = list(tokens)
    features.extend(
        f"{a} {b}" for a, b in zip(tokens, tokens[1:]) if a != b
    )
    for feature in features:
        bucket_seed, sign = _feature_hash(feature)
        accum[bucket_seed % dim] += sign
    if not np.any(accum):
        raise NoTokens(f"all features cancelled for {text!r}")
    return EmbeddingVector(accum)


class HashEmbeddingProvider:
    """Offline provider backed by hash_embed."""

    kind = "hash"

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def embed(self, text: str) -> EmbeddingVector:
        return hash_embed(text, self.dim)


class RemoteEmbeddingProvider:
    """HTTP provider: POST {"input": [text]} and read back one vector."""

    kind = "remote"

    def __init__(self, endpoint: str, dim: int = DEFAULT_DIM, token: str = "",
                 model: str = "", timeout_s: float = 30.0,
                 backoff_base_s: float = 1.0,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.dim = dim
        self.token = token
        self.model = model
        self.timeout_s = timeout_s
        self.backoff_base_s = backoff_base_s
        self._transport = transport

    def embed(self, text: str) -> EmbeddingVector:
        body = {"input": [text]}
        if self.model:
            body["model"] = self.model
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}

        last_error = None
        for attempt in range(_RETRY_ATTEMPTS):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                with httpx.Client(timeout=self.timeout_s, transport=self._transport) as client:
                    response = client.post(self.endpoint, json=body, headers=headers)
                if response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                    continue
                if response.status_code != 200:
                    raise ProviderUnreachable(
                        f"embedding provider returned HTTP {response.status_code}"
                    )
                payload = response.json()
            except httpx.HTTPError as exc:
                last_error = str(exc)
                continue
            except json.JSONDecodeError as exc:
                raise ProviderUnreachable(f"non-JSON embedding response: {exc}") from exc
            vector = _extract_vector(payload)
            if len(vector) != self.dim:
                raise DimensionMismatch(
                    f"provider returned D={len(vector)}, configured D={self.dim}"
                )
            return EmbeddingVector(np.asarray(vector, dtype=np.float64))
        raise ProviderUnreachable(
            f"embedding provider failed after {_RETRY_ATTEMPTS} attempts: {last_error}"
        )


def _extract_vector(payload) -> list:
    # accept both bare {"vectors": [[...]]} and the data/embedding envelope
    if isinstance(payload, dict):
        if "data" in payload and payload["data"]:
            entry = payload["data"][0]
            if isinstance(entry, dict) and "embedding" in entry:
                return entry["embedding"]
        if "vectors" in payload and payload["vectors"]:
            return payload["vectors"][0]
        if "embedding" in payload:
            return payload["embedding"]
    raise ProviderUnreachable(f"cannot find a vector in response keys {list(payload)!r}"
                              if isinstance(payload, dict)
                              else "cannot find a vector in response")


def embed(text: str, provider) -> EmbeddingVector:
    """Embed non-empty text through the given provider."""
    if not text.strip():
        raise NoTokens("cannot embed empty text")
    return provider.embed(text)
