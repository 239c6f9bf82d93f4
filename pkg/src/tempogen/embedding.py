"""Text embedders behind a single tiny interface.

The pipeline never depends on a particular text encoder: anything with an
``embed(text) -> (dim,) array`` method and a ``dim`` attribute works.  The
built-in :class:`HashingTextEmbedder` is deterministic and dependency-free;
real encoder outputs are ingested with :class:`PrecomputedEmbedder`.
"""

from __future__ import annotations

import hashlib
import json
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import TempogenError

__all__ = [
    "Embedder",
    "EmbedderFailureError",
    "HashingTextEmbedder",
    "PrecomputedEmbedder",
]


class EmbedderFailureError(TempogenError):
    pass


@runtime_checkable
class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingTextEmbedder:
    """Deterministic bag-of-words embedder.

    Each whitespace token hashes (stable across processes) to a seed for a
    pseudo-random unit vector; the token vectors are averaged and the result
    renormalized to unit L2 norm.  Distinct texts collide only with
    hash-collision probability, which is plenty for tests and toy training.
    """

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim <= 0:
            raise EmbedderFailureError(f"embedding dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.seed = int(seed)
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(
                token.encode("utf-8"), digest_size=8, key=str(self.seed).encode()
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise EmbedderFailureError("cannot embed empty text")
        mean = np.mean([self._token_vector(tok) for tok in tokens], axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            raise EmbedderFailureError(f"degenerate embedding for text {text!r}")
        return mean / norm


class PrecomputedEmbedder:
    """Embeddings from a JSONL file of ``{"text": ..., "vector": [...]}`` lines.

    A lookup miss is an error; silently substituting a different embedding
    would corrupt conditioning without any visible symptom.
    """

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        self.table = table
        self.dim = int(dim)

    @classmethod
    def from_file(cls, path) -> "PrecomputedEmbedder":
        table: dict[str, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                obj = json.loads(raw)
                vec = np.asarray(obj["vector"], dtype=np.float64)
                if vec.ndim != 1:
                    raise EmbedderFailureError(f"{path} line {lineno}: vector must be 1-D")
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise EmbedderFailureError(
                        f"{path} line {lineno}: dimension {vec.size} != {dim}"
                    )
                table[obj["text"]] = vec
        if dim is None:
            raise EmbedderFailureError(f"{path}: no embeddings found")
        return cls(table, dim)

    def embed(self, text: str) -> np.ndarray:
        if text not in self.table:
            raise EmbedderFailureError(f"no precomputed embedding for text {text!r}")
        return self.table[text]
