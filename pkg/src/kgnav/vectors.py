"""Embedders and an exact cosine top-k index over chunk embeddings."""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.request

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_SPLIT = re.compile(r"[^\W_]+")


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / norm


def embed_reference(text: str, d: int = 256) -> np.ndarray:
    """Signed feature-hashing embedding of lowercase alphanumeric tokens (FNV-1a, 64-bit)."""
    if d < 8:
        raise ValueError("embedding dimension must be >= 8")
    vec = np.zeros(d, dtype=np.float64)
    for tok in _SPLIT.findall(text.lower()):
        h = fnv1a64(tok.encode("utf-8"))
        vec[h % d] += -1.0 if h >> 63 else 1.0
    return _unit(vec)


def cosine01(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(min(max(float(np.dot(a, b)), 0.0), 1.0))


class ReferenceEmbedder:
    """Deterministic hashing embedder; stands in for a sentence-embedding model."""

    kind = "reference"

    def __init__(self, dim: int = 256):
        self.dim = dim

    def embed(self, texts) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([embed_reference(t, self.dim) for t in texts])

    def spec(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


class HttpEmbedder:
    """POSTs ``{"texts": [...]}`` and expects ``{"embeddings": [[...], ...]}``."""

    kind = "http"

    def __init__(self, url: str, dim: int = 256, timeout: float = 30.0, batch_size: int = 64):
        self.url = url
        self.dim = dim
        self.timeout = timeout
        self.batch_size = batch_size

    def _post(self, texts):
        body = json.dumps({"texts": list(texts)}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise RuntimeError(f"embedder request to {self.url} failed: {exc}") from exc
        rows = payload.get("embeddings") if isinstance(payload, dict) else None
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise ValueError("embedder response must carry one embedding per input text")
        out = np.asarray(rows, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.dim:
            raise ValueError(f"embedder returned dimension {out.shape[-1]}, expected {self.dim}")
        return np.stack([_unit(row) for row in out])

    def embed(self, texts) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self.dim))
        parts = [self._post(texts[i:i + self.batch_size]) for i in range(0, len(texts), self.batch_size)]
        return np.vstack(parts)

    def spec(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "url": self.url}


def default_embedder(dim: int = 256):
    url = os.environ.get("EMBEDDER_URL")
    return HttpEmbedder(url, dim=dim) if url else ReferenceEmbedder(dim)


def embedder_from_spec(spec: dict):
    if spec["kind"] == "reference":
        return ReferenceEmbedder(int(spec["dim"]))
    if spec["kind"] == "http":
        return HttpEmbedder(spec["url"], dim=int(spec["dim"]))
    raise ValueError(f"unknown embedder kind {spec['kind']!r}")


class VectorIndex:
    """Exact cosine index keyed by chunk id. Ties break on ascending chunk id."""

    def __init__(self, dim: int):
        self.dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        self._frozen = None   # (sorted ids, matrix), rebuilt lazily after writes

    def __len__(self):
        return len(self._vectors)

    def __contains__(self, chunk_id):
        return chunk_id in self._vectors

    def add(self, chunk_id: str, vector) -> None:
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"expected dimension {self.dim}, got {v.shape}")
        self._vectors[chunk_id] = _unit(v)
        self._frozen = None

    def add_many(self, chunk_ids, matrix) -> None:
        for cid, row in zip(chunk_ids, matrix):
            self.add(cid, row)

    def vector(self, chunk_id: str) -> np.ndarray:
        return self._vectors[chunk_id]

    def _freeze(self):
        frozen = self._frozen
        if frozen is None:
            ids = sorted(self._vectors)
            mat = np.stack([self._vectors[i] for i in ids]) if ids else np.zeros((0, self.dim))
            frozen = self._frozen = (ids, mat)
        return frozen

    @staticmethod
    def _cosines(mat, query):
        # einsum reduces every row with the same loop, so identical vectors get
        # bit-identical scores; BLAS gemv can differ in the last ulp across rows
        return np.clip(np.einsum("ij,j->i", mat, np.asarray(query, dtype=np.float64)), 0.0, 1.0)

    def similarities(self, query) -> dict[str, float]:
        ids, mat = self._freeze()
        return dict(zip(ids, self._cosines(mat, query).tolist()))

    def score(self, chunk_id: str, query) -> float:
        # same matmul path as search so scores agree bit-for-bit
        return self.similarities(query)[chunk_id]

    def search_top_k(self, query, k: int, exclude=()) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        ids, mat = self._freeze()
        if not ids:
            return []
        sims = self._cosines(mat, query)
        order = np.argsort(-sims, kind="stable")
        out = []
        for i in order:
            if ids[i] in exclude:
                continue
            out.append((ids[i], float(sims[i])))
            if len(out) == k:
                break
        return out
