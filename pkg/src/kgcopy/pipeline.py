"""Glue between the corpus, the static vectors and the network.

The model consumes numbers only; everything that turns dialogues and
KGs into those numbers (per-example query embeddings, similarity rows,
copy feedback ids) or turns extended-space ids back into words lives
here so that training, evaluation and serving agree exactly.
"""

from __future__ import annotations

import numpy as np

from .corpus import Dialogue, TrainingExample, Vocabulary, link_answers
from .kg import LocalKG, embed_triples
from .text import tokenize, normalize
from .vectors import EmbeddingTable, content_word_average

__all__ = [
    "build_examples", "build_gate_inputs", "team_rows", "first_token_ids",
    "copy_label_tokens", "query_embedding", "decode_example", "ids_to_tokens",
]


def build_examples(dialogues: list[Dialogue], kgs: dict[str, LocalKG],
                   vocab: Vocabulary, window: int, threshold: float,
                   max_context_len: int, max_target_len: int,
                   ) -> list[TrainingExample]:
    """Linked training examples for every system turn of every dialogue.

    Dialogues whose team has no KG get an empty one; their gate labels
    are all zero and the whole output mass sits on the vocabulary.
    """
    out = []
    for dlg in dialogues:
        kg = kgs.get(dlg.team_id) or LocalKG.empty(dlg.team_id)
        out.extend(link_answers(
            dlg, kg, vocab, window=window, threshold=threshold,
            max_context_len=max_context_len, max_target_len=max_target_len))
    return out


def team_rows(kgs: dict[str, LocalKG], table: EmbeddingTable,
              ) -> dict[str, np.ndarray]:
    """Triple-row embeddings per team (k, d); empty KGs give (0, d)."""
    return {team: embed_triples(kg, table) for team, kg in kgs.items()}


def query_embedding(query_tokens, table: EmbeddingTable) -> np.ndarray:
    """Content-word average of the question; zeros when nothing usable."""
    if not query_tokens:
        return np.zeros(table.dim)
    return content_word_average(list(query_tokens), table)


def build_gate_inputs(examples: list[TrainingExample],
                      kgs: dict[str, LocalKG], table: EmbeddingTable,
                      k_max: int) -> dict:
    """Per-example arrays for batching: emb_q, kg_sim, kg_mask.

    Similarities are fixed inputs (the gate reads them, gradients never
    touch them), so they are computed once up front.
    """
    from .model import gate_similarity

    rows_by_team = {}
    n, d = len(examples), table.dim
    emb_q = np.zeros((n, d))
    kg_sim = np.zeros((n, k_max))
    kg_mask = np.zeros((n, k_max))
    for i, ex in enumerate(examples):
        if ex.team_id not in rows_by_team:
            kg = kgs.get(ex.team_id) or LocalKG.empty(ex.team_id)
            rows_by_team[ex.team_id] = embed_triples(kg, table)
        emb_q[i] = query_embedding(ex.query_tokens, table)
        kg_sim[i], kg_mask[i] = gate_similarity(
            emb_q[i], rows_by_team[ex.team_id], k_max)
    return {"emb_q": emb_q, "kg_sim": kg_sim, "kg_mask": kg_mask}


def first_token_ids(kg: LocalKG, vocab: Vocabulary, k_max: int) -> np.ndarray:
    """Feedback ids for copy emissions: first object token, per position."""
    ids = np.full(k_max, Vocabulary.UNK_ID, dtype=np.int64)
    for pos, triple in enumerate(kg.triples):
        toks = tokenize(normalize(triple.object))
        ids[pos] = vocab.id_of(toks[0]) if toks else Vocabulary.UNK_ID
    return ids


def copy_label_tokens(kg: LocalKG) -> list[list[str]]:
    """Normalized object-label tokens per triple position."""
    return [tokenize(normalize(t.object)) for t in kg.triples]


def ids_to_tokens(ext_ids, vocab: Vocabulary, kg: LocalKG,
                  ) -> tuple[list[str], list[tuple[int, int]]]:
    """Expand extended-space ids to tokens.

    Returns the token list plus ``(start, triple_position)`` records
    for each copy emission (start indexes into the token list), which
    serving uses to attribute spans.
    """
    labels = copy_label_tokens(kg)
    tokens: list[str] = []
    copies: list[tuple[int, int]] = []
    for eid in ext_ids:
        if eid < vocab.v:
            tokens.append(vocab.decode([eid])[0])
        else:
            pos = eid - vocab.v
            if pos >= len(labels):
                raise ValueError(f"copy id {eid} beyond KG size {len(labels)}")
            copies.append((len(tokens), pos))
            tokens.extend(labels[pos] or ["<unk>"])
    return tokens, copies


def decode_example(model, vocab: Vocabulary, table: EmbeddingTable,
                   kg: LocalKG, context_ids, query_tokens,
                   max_len: int = 40):
    """Greedy decode one context; returns (tokens, copies, gates)."""
    from .model import gate_similarity

    rows = embed_triples(kg, table)
    emb_q = query_embedding(query_tokens, table)
    kg_sim, kg_mask = gate_similarity(emb_q, rows, model.k_max)
    feed = first_token_ids(kg, vocab, model.k_max)
    result = model.greedy_decode(context_ids, emb_q, kg_sim, kg_mask,
                                 feed, max_len=max_len)
    tokens, copies = ids_to_tokens(result.ext_ids, vocab, kg)
    return tokens, copies, result.gates
