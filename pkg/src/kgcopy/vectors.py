"""Pretrained word-vector table and the content-word average gate query.

The table is restricted to the training vocabulary. Tokens absent from
the vector file get a deterministic random vector derived from the token
string itself (uniform in [-0.1, 0.1]), so results do not depend on
vocabulary iteration order or on global RNG state. UNK is the mean of
all vectors actually loaded from the file; PAD is exactly zero.
"""

from __future__ import annotations

import hashlib
import os
from typing import Sequence

import numpy as np

from .text import content_tokens, pos_tag

__all__ = [
    "EmbeddingTable",
    "VectorFormatError",
    "load_pretrained",
    "random_table",
    "content_word_average",
]

DEFAULT_DIM = 300
_RANDOM_SCALE = 0.1


class VectorFormatError(ValueError):
    """Raised when a vector file does not match the declared format."""


def _seeded_vector(token: str, dim: int, salt: int = 0) -> np.ndarray:
    digest = hashlib.sha256(f"{salt}:{token}".encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(seed)
    return rng.uniform(-_RANDOM_SCALE, _RANDOM_SCALE, size=dim)


class EmbeddingTable:
    """token -> vector map with UNK fallback.

    ``vectors`` maps token strings to 1-d float arrays of length ``dim``.
    """

    def __init__(self, vectors: dict[str, np.ndarray], dim: int,
                 unk: np.ndarray | None = None):
        self.dim = dim
        self.vectors = {}
        for tok, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise VectorFormatError(
                    f"vector for {tok!r} has shape {vec.shape}, expected ({dim},)")
            if not np.all(np.isfinite(vec)):
                raise VectorFormatError(f"vector for {tok!r} is not finite")
            self.vectors[tok] = vec
        self.unk = (np.zeros(dim) if unk is None
                    else np.asarray(unk, dtype=np.float64))
        self.pad = np.zeros(dim)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def vector(self, token: str) -> np.ndarray:
        """Vector for ``token``, or the UNK vector if absent."""
        return self.vectors.get(token, self.unk)


def load_pretrained(path: str | os.PathLike, vocab) -> EmbeddingTable:
    """Load a standard text vector file, restricted to ``vocab`` tokens.

    The file starts with a ``count dim`` header followed by one
    ``token v1 .. vdim`` line per word. Vocabulary tokens missing from
    the file receive seeded random vectors; UNK becomes the mean of the
    loaded vectors (zero when the intersection is empty). The special
    PAD token is pinned to the zero vector.
    """
    wanted = set(vocab.tokens)
    with open(path, encoding="utf-8", errors="replace") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise VectorFormatError(f"{path}: malformed header {header!r}")
        try:
            _count, dim = (int(x) for x in header)
        except ValueError as exc:
            raise VectorFormatError(f"{path}: malformed header") from exc
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            token = parts[0]
            if token not in wanted or token in vectors:
                continue
            values = [p for p in parts[1:] if p]
            if len(values) != dim:
                raise VectorFormatError(
                    f"{path}:{lineno}: expected {dim} floats, got {len(values)}")
            vectors[token] = np.asarray(values, dtype=np.float64)

    loaded = list(vectors.values())
    unk = np.mean(loaded, axis=0) if loaded else np.zeros(dim)
    for token in vocab.tokens:
        if token not in vectors:
            vectors[token] = _seeded_vector(token, dim)
    vectors[vocab.PAD] = np.zeros(dim)
    vectors[vocab.UNK] = unk
    return EmbeddingTable(vectors, dim, unk=unk)


def random_table(vocab, dim: int = DEFAULT_DIM, salt: int = 0) -> EmbeddingTable:
    """Seeded random table for every vocabulary token.

    Stands in for a pretrained file when none is available (the loader's
    missing-token fallback applied across the board); deterministic in
    the token strings and ``salt``.
    """
    vectors = {tok: _seeded_vector(tok, dim, salt) for tok in vocab.tokens}
    vectors[vocab.PAD] = np.zeros(dim)
    unk = np.mean([vectors[t] for t in vocab.tokens], axis=0)
    vectors[vocab.UNK] = unk
    return EmbeddingTable(vectors, dim, unk=unk)


def table_from_array(tokens: Sequence[str], rows: np.ndarray,
                     unk: np.ndarray | None = None) -> EmbeddingTable:
    """Rebuild a table from vocabulary-aligned rows (checkpoint restore)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != len(tokens):
        raise VectorFormatError(
            f"rows shape {rows.shape} does not match {len(tokens)} tokens")
    vectors = {tok: rows[i] for i, tok in enumerate(tokens)}
    return EmbeddingTable(vectors, rows.shape[1], unk=unk)


def content_word_average(
    tokens: Sequence[str],
    table: EmbeddingTable,
    pos_tags: Sequence[str] | None = None,
    tagger=pos_tag,
) -> np.ndarray:
    """Mean embedding of the content words in ``tokens``.

    Tokens tagged NOUN/PROPN/VERB are averaged; when none qualify the
    mean runs over all tokens. This is the gate's query vector.
    """
    if len(tokens) == 0:
        raise ValueError("tokens must be non-empty")
    kept = content_tokens(tokens, tags=pos_tags, tagger=tagger)
    vecs = np.stack([table.vector(tok) for tok in kept])
    return vecs.mean(axis=0)
