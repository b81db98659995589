"""Text embeddings for the diversity pipeline.

Two real providers: a remote OpenAI-compatible embeddings endpoint (for
SimCSE-class models served behind HTTP) and a fully deterministic local
hashing provider so everything downstream is testable offline. A third,
StaticProvider, maps fixed texts to hand-chosen vectors for tests and demos.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field

import httpx
import numpy as np

from .wire import EndpointUnavailable, ResponseCache, content_key, post_with_retry


class EmbeddingError(Exception):
    pass


class DimensionMismatch(EmbeddingError):
    pass


class ZeroVector(EmbeddingError):
    def __init__(self, index: int):
        super().__init__(f"vector at index {index} has zero norm")
        self.index = index


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    provider_id: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise EmbeddingError(f"expected 1-d vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise EmbeddingError("vector has non-finite entries")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric kernel with unit diagonal; validated on construction."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise EmbeddingError(f"expected square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise EmbeddingError("kernel has non-finite entries")
        if np.max(np.abs(arr - arr.T)) > 1e-9:
            raise EmbeddingError("kernel is not symmetric")
        if np.max(np.abs(np.diag(arr) - 1.0)) > 1e-9:
            raise EmbeddingError("kernel diagonal is not 1")
        arr = (arr + arr.T) / 2.0
        np.fill_diagonal(arr, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


_TOKEN_RE = re.compile(r"[0-9A-Za-z]+")


class LocalHashProvider:
    """Deterministic bag-of-hashed-tokens embedding.

    Tokens split on non-alphanumerics; each token lands in one of ``dim``
    buckets with a ±1 sign drawn from a second hash; token vectors are summed
    and the result L2-normalised. Identical (dim, seed, text) always produces
    the identical vector, with no model or network involved.
    """

    def __init__(self, dim: int = 256, seed: int = 0, normalization: str = "unit_l2"):
        if dim <= 0:
            raise EmbeddingError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.normalization = normalization
        self.provider_id = f"local-hash-d{dim}-s{seed}"

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text)
            if not tokens:
                tokens = [text or "<empty>"]
            for tok in tokens:
                bucket = _stable_hash(f"{self.seed}:{tok}") % self.dim
                sign = 1.0 if _stable_hash(f"sign:{self.seed}:{tok}") % 2 == 0 else -1.0
                out[row, bucket] += sign
        if self.normalization == "unit_l2":
            out = _unit_l2(out)
        return out


class StaticProvider:
    """Maps fixed texts to pre-chosen vectors; raises on unknown text."""

    def __init__(self, table: dict[str, np.ndarray], normalization: str = "none"):
        if not table:
            raise EmbeddingError("empty table")
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        dims = {v.shape[0] for v in self.table.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"table vectors have mixed dims {dims}")
        self.dim = dims.pop()
        self.normalization = normalization
        self.provider_id = f"static-d{self.dim}"

    def embed(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            if text not in self.table:
                raise EmbeddingError(f"no static vector for text {text!r}")
            rows.append(self.table[text])
        out = np.stack(rows).astype(np.float64)
        if self.normalization == "unit_l2":
            out = _unit_l2(out)
        return out


@dataclass(frozen=True)
class EmbeddingEndpoint:
    base_url: str
    model_id: str
    timeout: float = 60.0
    max_retries: int = 3
    api_key: str | None = None


class RemoteEmbeddingProvider:
    """Client for an OpenAI-compatible /embeddings endpoint with per-text caching."""

    def __init__(
        self,
        endpoint: EmbeddingEndpoint,
        normalization: str = "unit_l2",
        cache: ResponseCache | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.normalization = normalization
        self.cache = cache
        self.provider_id = f"remote-{endpoint.model_id}"
        self._client = httpx.Client(timeout=endpoint.timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _fetch(self, texts: list[str]) -> list[list[float]]:
        payload = {"model": self.endpoint.model_id, "input": texts}
        body = post_with_retry(
            self._client,
            self.endpoint.base_url.rstrip("/") + "/embeddings",
            payload,
            api_key=self.endpoint.api_key,
            max_retries=self.endpoint.max_retries,
        )
        try:
            data = sorted(body["data"], key=lambda d: d["index"])
            vectors = [d["embedding"] for d in data]
        except (KeyError, TypeError) as exc:
            raise EndpointUnavailable(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise EndpointUnavailable(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        return vectors

    def embed(self, texts: list[str]) -> np.ndarray:
        vectors: dict[int, list[float]] = {}
        missing: list[int] = []
        keys: list[str] = []
        for i, text in enumerate(texts):
            key = content_key({"model": self.endpoint.model_id, "text": text})
            keys.append(key)
            entry = self.cache.get(self.endpoint.model_id, key) if self.cache else None
            if entry is not None:
                vectors[i] = entry["embedding"]
            else:
                missing.append(i)
        for start in range(0, len(missing), 128):
            chunk = missing[start : start + 128]
            fetched = self._fetch([texts[i] for i in chunk])
            for i, vec in zip(chunk, fetched):
                vectors[i] = vec
                if self.cache:
                    self.cache.put(
                        self.endpoint.model_id,
                        keys[i],
                        {"text": texts[i], "embedding": vec},
                    )
        dims = {len(vectors[i]) for i in range(len(texts))}
        if len(dims) != 1:
            raise DimensionMismatch(f"provider returned mixed dims {dims}")
        out = np.array([vectors[i] for i in range(len(texts))], dtype=np.float64)
        if self.normalization == "unit_l2":
            out = _unit_l2(out)
        return out


def _unit_l2(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return matrix / safe


def embed_batch(provider, texts: list[str]) -> list[EmbeddingVector]:
    """Embed texts in order; one vector per text, dims checked, entries finite."""
    if not texts:
        raise EmbeddingError("texts must be non-empty")
    matrix = provider.embed(list(texts))
    if matrix.shape[0] != len(texts):
        raise EmbeddingError(
            f"provider returned {matrix.shape[0]} vectors for {len(texts)} texts"
        )
    return [EmbeddingVector(matrix[i], provider.provider_id) for i in range(len(texts))]


def cosine_kernel(vectors) -> SimilarityMatrix:
    """Cosine similarity matrix with the diagonal forced to exactly 1.

    Accepts a list of EmbeddingVector or an (n, dim) array. Entries are
    clamped to [-1, 1]; a zero vector is an error (its cosine is undefined).
    """
    if isinstance(vectors, np.ndarray):
        matrix = np.asarray(vectors, dtype=np.float64)
    else:
        vecs = list(vectors)
        if not vecs:
            raise EmbeddingError("need at least one vector")
        dims = {v.dim for v in vecs}
        if len(dims) != 1:
            raise DimensionMismatch(f"mixed dims {dims}")
        matrix = np.stack([v.values for v in vecs])
    norms = np.linalg.norm(matrix, axis=1)
    for i, nrm in enumerate(norms):
        if nrm == 0.0:
            raise ZeroVector(i)
    unit = matrix / norms[:, None]
    kernel = np.clip(unit @ unit.T, -1.0, 1.0)
    kernel = (kernel + kernel.T) / 2.0
    np.fill_diagonal(kernel, 1.0)
    return SimilarityMatrix(kernel)


_KERNEL_MAGIC = b"CKRN"
_KERNEL_DTYPE_TAG = b"float64\x00"


def save_kernel(kernel: SimilarityMatrix, path) -> None:
    """Binary kernel dump: magic, version, n, dtype tag, then row-major float64."""
    with open(path, "wb") as fh:
        fh.write(_KERNEL_MAGIC)
        fh.write(struct.pack("<II", 1, kernel.n))
        fh.write(_KERNEL_DTYPE_TAG)
        fh.write(np.ascontiguousarray(kernel.values, dtype="<f8").tobytes())


def load_kernel(path) -> SimilarityMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _KERNEL_MAGIC:
            raise EmbeddingError(f"bad kernel file magic {magic!r}")
        version, n = struct.unpack("<II", fh.read(8))
        if version != 1:
            raise EmbeddingError(f"unsupported kernel file version {version}")
        tag = fh.read(8)
        if tag != _KERNEL_DTYPE_TAG:
            raise EmbeddingError(f"unsupported kernel dtype tag {tag!r}")
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n)
    return SimilarityMatrix(data.copy())
