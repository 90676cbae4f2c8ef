"""Per-team local knowledge graphs: loading, indexing, and embedding.

A local KG is the ordered list of (subject, relation, object) facts for
one team, read from a tab-separated UTF-8 file. Triple order is the copy
address space: position ``j`` in the list is what a generated copy token
refers to, so loading is deterministic and duplicates are dropped
keeping the first occurrence.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .text import normalize, tokenize

__all__ = [
    "Triple",
    "LocalKG",
    "KGError",
    "KGParseError",
    "EmptyKGError",
    "load_team_kg",
    "load_kg_dir",
    "embed_triples",
    "resolve_object",
]

#: Hard cap on triples per team; copy distributions are padded to this.
K_MAX = 256


class KGError(ValueError):
    """Base class for knowledge-graph loading problems."""


class KGParseError(KGError):
    """A record in a KG file did not parse into three non-empty fields."""


class EmptyKGError(KGError):
    """A KG file contained no triples."""


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str

    def __post_init__(self):
        for name in ("subject", "relation", "object"):
            cleaned = " ".join(getattr(self, name).split())
            if not normalize(cleaned):
                raise KGError(f"triple field {name!r} is empty")
            # frozen dataclass: bypass the instance-level setattr guard
            super().__setattr__(name, cleaned)
        if not tokenize(self.subject) or not tokenize(self.relation):
            raise KGError("subject and relation must tokenize to >= 1 token")

    def key(self) -> tuple[str, str, str]:
        return (normalize(self.subject), normalize(self.relation),
                normalize(self.object))


@dataclass(frozen=True)
class LocalKG:
    """Immutable, position-indexed triple list for one team.

    ``object_index`` maps the normalized object label to all positions
    holding that object, in ascending order.
    """

    team_id: str
    triples: tuple[Triple, ...]
    object_index: dict[str, list[int]] = field(compare=False)

    @property
    def k(self) -> int:
        return len(self.triples)

    @staticmethod
    def from_triples(team_id: str, triples: list[Triple]) -> "LocalKG":
        seen: set[tuple[str, str, str]] = set()
        kept: list[Triple] = []
        for t in triples:
            key = t.key()
            if key in seen:
                continue
            seen.add(key)
            kept.append(t)
        if len(kept) > K_MAX:
            raise KGError(
                f"{team_id}: {len(kept)} triples exceed the cap of {K_MAX}")
        index: dict[str, list[int]] = {}
        for pos, t in enumerate(kept):
            index.setdefault(normalize(t.object), []).append(pos)
        return LocalKG(team_id=team_id, triples=tuple(kept), object_index=index)

    @staticmethod
    def empty(team_id: str) -> "LocalKG":
        """Sentinel for dialogues without a team KG (k = 0).

        Never produced by :func:`load_team_kg`; the model treats k = 0 as
        "no copy source" and routes all probability mass to the
        vocabulary.
        """
        return LocalKG(team_id=team_id, triples=(), object_index={})

    def entity_labels(self) -> set[str]:
        """Normalized subject and object labels, for entity matching."""
        labels = set(self.object_index)
        labels.update(normalize(t.subject) for t in self.triples)
        return labels


def load_team_kg(path: str | os.PathLike, team_id: str) -> LocalKG:
    """Load one team's KG from a TSV file (subject TAB relation TAB object).

    Raises :class:`KGParseError` with the offending line number for
    malformed records and :class:`EmptyKGError` for files with no triples.
    """
    triples: list[Triple] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise KGParseError(
                    f"{path}:{lineno}: expected three tab-separated "
                    f"non-empty fields, got {line!r}")
            try:
                triples.append(Triple(*(p.strip() for p in parts)))
            except KGError as exc:
                raise KGParseError(f"{path}:{lineno}: {exc}") from exc
    if not triples:
        raise EmptyKGError(f"{path}: no triples")
    return LocalKG.from_triples(team_id, triples)


def load_kg_dir(kg_dir: str | os.PathLike) -> dict[str, LocalKG]:
    """Load every ``<team_id>.tsv`` file under ``kg_dir``."""
    kgs: dict[str, LocalKG] = {}
    for name in sorted(os.listdir(kg_dir)):
        if not name.endswith(".tsv"):
            continue
        team_id = name[:-4]
        kgs[team_id] = load_team_kg(os.path.join(kg_dir, name), team_id)
    return kgs


def embed_triples(kg: LocalKG, table) -> np.ndarray:
    """Embed each triple as the mean vector of its subject and relation tokens.

    Returns a (k, dim) float array; row i summarizes triple i for the
    gate's similarity query. Out-of-table tokens fall back to the table's
    UNK vector, so the result is always finite.
    """
    rows = np.zeros((kg.k, table.dim), dtype=np.float64)
    for i, t in enumerate(kg.triples):
        tokens = tokenize(t.subject) + tokenize(t.relation)
        vecs = np.stack([table.vector(tok) for tok in tokens])
        rows[i] = vecs.mean(axis=0)
    return rows


def resolve_object(kg: LocalKG, position: int) -> str:
    """Object label of the triple at ``position``; the copy-token surface."""
    if not 0 <= position < kg.k:
        raise IndexError(
            f"triple position {position} out of range for k={kg.k}")
    return kg.triples[position].object
