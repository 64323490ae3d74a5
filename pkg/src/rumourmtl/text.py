"""Tweet preprocessing, embedding lookup and padded branch tensors.

Tweets are lowercased, stripped to alphabetic tokens and represented by the
mean of their word vectors. Branches become fixed-length matrices with a
validity mask so variable-length sequences can share one batch layout.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def preprocess(text: str) -> list[str]:
    """Lowercase, replace every non-alphabetic character with a space, split.

    Replacement (rather than in-place deletion) keeps fragments like
    "don't" as [don, t] instead of merging them.
    """
    chars = [c if "a" <= c <= "z" else " " for c in text.lower()]
    return "".join(chars).split()


class EmbeddingTable:
    """Fixed token -> vector mapping with a common dimension."""

    def __init__(self, dimension: int, entries: dict[str, np.ndarray]):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        for token, vec in entries.items():
            if vec.shape != (dimension,):
                raise ValueError(
                    f"token {token!r} has vector shape {vec.shape}, expected ({dimension},)")
        self.dimension = dimension
        self._entries = entries

    def get(self, token: str) -> Optional[np.ndarray]:
        return self._entries.get(token)

    def __contains__(self, token: str) -> bool:
        return token in self._entries

    def __len__(self) -> int:
        return len(self._entries)


class HashEmbeddings(EmbeddingTable):
    """Deterministic pseudo-random unit vectors, one per requested token.

    Stands in for a pretrained table: every token is in-vocabulary and the
    vector depends only on (token, seed).
    """

    def __init__(self, dimension: int, seed: int = 0):
        super().__init__(dimension, {})
        self.seed = seed

    def get(self, token: str) -> np.ndarray:
        cached = self._entries.get(token)
        if cached is not None:
            return cached
        digest = hashlib.blake2b(
            f"{self.seed}:{token}".encode(), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        vec = rng.standard_normal(self.dimension)
        vec /= np.linalg.norm(vec)
        self._entries[token] = vec
        return vec

    def __contains__(self, token: str) -> bool:
        return True


def hash_embeddings(dimension: int, seed: int = 0) -> HashEmbeddings:
    """Build the deterministic fallback embedding table."""
    return HashEmbeddings(dimension, seed)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Read a text embedding file: token then ``dimension`` reals per line,
    with an optional ``<count> <dimension>`` header."""
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    dimension: Optional[int] = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if lineno == 1 and len(fields) == 2:
                try:
                    declared = int(fields[1])
                except ValueError:
                    declared = None
                if declared is not None and fields[0].isdigit():
                    dimension = declared
                    continue
            token, values = fields[0], fields[1:]
            try:
                vec = np.array([float(v) for v in values], dtype=float)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric field: {exc}") from None
            if dimension is None:
                dimension = len(vec)
            if len(vec) != dimension:
                raise ValueError(
                    f"{path}:{lineno}: expected {dimension} values, got {len(vec)}")
            entries[token] = vec
    if dimension is None:
        raise ValueError(f"{path}: empty embedding file")
    return EmbeddingTable(dimension, entries)


def embed_tweet(tokens: Sequence[str], table: EmbeddingTable) -> np.ndarray:
    """Average the vectors of in-vocabulary tokens; zero vector if none."""
    vectors = [table.get(t) for t in tokens if t in table]
    if not vectors:
        return np.zeros(table.dimension)
    return np.mean(vectors, axis=0)


@dataclass(frozen=True)
class BranchTensor:
    """Zero-padded sequence of tweet vectors with a validity mask."""

    matrix: np.ndarray  # (max_len, dimension)
    mask: np.ndarray    # (max_len,) bool
    true_length: int


def pad_and_mask(vectors: Sequence[np.ndarray], max_len: int) -> BranchTensor:
    """Stack tweet vectors into a fixed-length matrix, truncating from the
    leaf end (the source-first prefix is kept)."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if len(vectors) == 0:
        raise ValueError("need at least one vector")
    dim = len(vectors[0])
    n = min(len(vectors), max_len)
    matrix = np.zeros((max_len, dim))
    for i in range(n):
        matrix[i] = vectors[i]
    mask = np.zeros(max_len, dtype=bool)
    mask[:n] = True
    return BranchTensor(matrix=matrix, mask=mask, true_length=n)
