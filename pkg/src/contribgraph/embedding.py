"""Per-contribution vector index with exact cosine top-k retrieval.

Retrieval is a full scan (no approximate structure): desk-scale
corpora do not need one and exactness keeps the oracles simple.
Vectors are stored as 32-bit little-endian floats; scoring happens in
float64.
"""
from __future__ import annotations

import hashlib
import os
import struct
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BackendError
from .graph import ContributionGraph
from .model import Contribution

EMBED_ENDPOINT_VAR = "CONTRIBGRAPH_EMBED_ENDPOINT"
EMBED_API_KEY_VAR = "CONTRIBGRAPH_EMBED_API_KEY"
EMBED_MODEL_VAR = "CONTRIBGRAPH_EMBED_MODEL"

MAGIC = b"SCGE"
FORMAT_VERSION = 1


def embedding_text(contribution: Contribution) -> str:
    """Name and description concatenated with a fixed ": " separator."""
    return f"{contribution.name}: {contribution.description}"


class EmbeddingProvider(ABC):
    tag: str = "provider"
    dim: int = 0

    @abstractmethod
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """(len(texts), dim) float32 array."""


class MockEmbeddingProvider(EmbeddingProvider):
    """Deterministic stand-in: hashes each text to a pseudo-random unit vector."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self.tag = f"mock-hash:{dim}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            seed = int.from_bytes(
                hashlib.sha256(text.encode("utf-8")).digest()[:8], "big"
            )
            rng = np.random.default_rng(seed)
            vec = rng.standard_normal(self.dim)
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                vec = vec / norm
            out[i] = vec.astype(np.float32)
        return out


class HttpEmbeddingProvider(EmbeddingProvider):
    """OpenAI-compatible embeddings endpoint, configured via environment."""

    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint or os.environ.get(EMBED_ENDPOINT_VAR)
        self.api_key = api_key or os.environ.get(EMBED_API_KEY_VAR)
        self.model = model or os.environ.get(EMBED_MODEL_VAR, "")
        self.timeout = timeout
        self.tag = f"http:{self.model}"
        self.dim = 0  # discovered from the first response
        if not self.endpoint:
            raise BackendError(f"no embedding endpoint configured (set {EMBED_ENDPOINT_VAR})")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                self.endpoint,
                json={"model": self.model, "input": list(texts)},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError(f"embedding request failed: {exc}") from exc
        if response.status_code != 200:
            raise BackendError(
                f"embedding endpoint returned {response.status_code}: {response.text[:500]}"
            )
        body = response.json()
        vectors = np.asarray(
            [row["embedding"] for row in body["data"]], dtype=np.float32
        )
        self.dim = int(vectors.shape[1])
        return vectors


class EmbeddingIndex:
    """Immutable-after-build map from contribution id to vector."""

    def __init__(self, dim: int, provider_tag: str = ""):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.provider_tag = provider_tag
        self.ids: list[str] = []
        self._rows: list[np.ndarray] = []
        self._matrix: Optional[np.ndarray] = None
        self._norms: Optional[np.ndarray] = None
        self._positions: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, cid: str) -> bool:
        return cid in self._positions

    def add(self, cid: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise ValueError(f"vector for {cid} has shape {vector.shape}, want ({self.dim},)")
        self._positions[cid] = len(self.ids)
        self.ids.append(cid)
        self._rows.append(vector)
        self._matrix = None
        self._norms = None

    def vector(self, cid: str) -> np.ndarray:
        return self.matrix[self._positions[cid]]

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = (
                np.vstack(self._rows)
                if self._rows
                else np.empty((0, self.dim), dtype=np.float32)
            )
            self._norms = np.linalg.norm(self._matrix.astype(np.float64), axis=1)
        return self._matrix

    def cosine_top_k(
        self,
        query: np.ndarray,
        k: int,
        id_filter: Optional[Callable[[str], bool]] = None,
    ) -> list[tuple[str, float]]:
        """Exact top-k by cosine among entries passing the filter.

        Ties break by ascending id; zero-norm queries or entries score 0.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        query = np.asarray(query, dtype=np.float64).reshape(-1)
        if query.shape != (self.dim,):
            raise ValueError(f"query dim {query.shape} does not match index dim {self.dim}")
        matrix = self.matrix
        norms = self._norms
        qnorm = float(np.linalg.norm(query))
        if len(self.ids) == 0:
            return []
        if qnorm == 0.0:
            scores = np.zeros(len(self.ids))
        else:
            dots = matrix.astype(np.float64) @ query
            with np.errstate(divide="ignore", invalid="ignore"):
                scores = np.where(norms > 0.0, dots / (norms * qnorm), 0.0)
            scores = np.clip(scores, -1.0, 1.0)
        pool = [
            (cid, float(scores[i]))
            for i, cid in enumerate(self.ids)
            if id_filter is None or id_filter(cid)
        ]
        pool.sort(key=lambda item: (-item[1], item[0]))
        return pool[:k]

    # ------------------------------------------------------------------
    # Binary persistence
    # ------------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        matrix = self.matrix
        with path.open("wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<IIQ", FORMAT_VERSION, self.dim, len(self.ids)))
            for i, cid in enumerate(self.ids):
                raw = cid.encode("utf-8")
                f.write(struct.pack("<H", len(raw)))
                f.write(raw)
                f.write(matrix[i].astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path, provider_tag: str = "") -> "EmbeddingIndex":
        with Path(path).open("rb") as f:
            magic = f.read(4)
            if magic != MAGIC:
                raise ValueError(f"not an embedding index file (magic {magic!r})")
            version, dim, count = struct.unpack("<IIQ", f.read(16))
            if version != FORMAT_VERSION:
                raise ValueError(f"unsupported index version {version}")
            index = cls(dim=dim, provider_tag=provider_tag)
            for _ in range(count):
                (id_len,) = struct.unpack("<H", f.read(2))
                cid = f.read(id_len).decode("utf-8")
                vec = np.frombuffer(f.read(4 * dim), dtype="<f4")
                index.add(cid, vec.copy())
        return index


def build_index(
    graph: ContributionGraph,
    provider: EmbeddingProvider,
    batch_size: int = 64,
) -> EmbeddingIndex:
    """Embed every contribution (sorted by id for reproducibility)."""
    ids = sorted(graph.nodes)
    texts = [embedding_text(graph.nodes[cid]) for cid in ids]
    dim: Optional[int] = provider.dim or None
    index: Optional[EmbeddingIndex] = None
    for start in range(0, len(ids), batch_size):
        chunk = texts[start : start + batch_size]
        vectors = provider.embed(chunk)
        if index is None:
            dim = int(vectors.shape[1]) if dim is None else dim
            index = EmbeddingIndex(dim=dim, provider_tag=provider.tag)
        for offset, vector in enumerate(vectors):
            index.add(ids[start + offset], vector)
    if index is None:
        index = EmbeddingIndex(dim=dim or provider.dim or 1, provider_tag=provider.tag)
    return index
