"""Corpus-level BLEU, entity F1, and split evaluation.

BLEU is the standard corpus-level geometric mean of 1..4-gram modified
precisions with brevity penalty. Zero-match orders are smoothed as
``1 / (c_n + 1)`` (and orders with no candidate n-grams at all count as
precision 1), which keeps the score finite for short outputs while a
corpus decoded identical to its references still scores exactly 100.

Entity F1 is micro-averaged over responses whose reference mentions at
least one KG entity: an entity counts as mentioned when its normalized
label occurs as a contiguous token span.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import Dialogue, TrainingExample, Vocabulary
from .kg import LocalKG, embed_triples
from .text import normalize, tokenize
from .vectors import EmbeddingTable
from .pipeline import first_token_ids, ids_to_tokens, query_embedding

__all__ = ["bleu", "entity_f1", "entity_mentions", "evaluate_split",
           "EvalReport"]

MAX_ORDER = 4


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: list[list[str]], references: list[list[str]]) -> float:
    """Corpus-level BLEU in [0, 100]."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    if not hypotheses:
        return 0.0
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            hyp_grams = _ngrams(hyp, n)
            if not hyp_grams:
                continue
            ref_grams = _ngrams(ref, n)
            totals[n - 1] += sum(hyp_grams.values())
            matches[n - 1] += sum(
                min(c, ref_grams[g]) for g, c in hyp_grams.items())
    log_p = 0.0
    for m, c in zip(matches, totals):
        if c == 0:
            p = 1.0
        elif m > 0:
            p = m / c
        else:
            p = 1.0 / (c + 1)
        log_p += np.log(p)
    log_p /= MAX_ORDER
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len > ref_len else float(np.exp(1.0 - ref_len / hyp_len))
    return float(100.0 * bp * np.exp(log_p))


def entity_mentions(tokens: list[str], labels: set[str]) -> set[str]:
    """Labels whose token sequence occurs contiguously in ``tokens``."""
    found = set()
    if not tokens or not labels:
        return found
    label_toks = {lab: tuple(tokenize(lab)) for lab in labels}
    max_len = max((len(t) for t in label_toks.values()), default=0)
    spans = set()
    for width in range(1, min(max_len, len(tokens)) + 1):
        for start in range(len(tokens) - width + 1):
            spans.add(tuple(tokens[start:start + width]))
    for lab, toks in label_toks.items():
        if toks and toks in spans:
            found.add(lab)
    return found


def entity_f1(hypotheses: list[list[str]], references: list[list[str]],
              entity_sets: list[set[str]]) -> float:
    """Micro F1 over responses with a non-empty gold entity set, in
    [0, 100]. ``entity_sets[i]`` is the KG entity-label inventory for
    response i (normalized labels)."""
    if not (len(hypotheses) == len(references) == len(entity_sets)):
        raise ValueError("misaligned entity F1 inputs")
    tp = fp = fn = 0
    for hyp, ref, labels in zip(hypotheses, references, entity_sets):
        gold = entity_mentions(ref, labels)
        if not gold:
            continue
        pred = entity_mentions(hyp, labels)
        tp += len(gold & pred)
        fp += len(pred - gold)
        fn += len(gold - pred)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(100.0 * 2 * precision * recall / (precision + recall))


@dataclass
class TeamScore:
    n_responses: int = 0
    bleu: float = 0.0
    entity_f1: float = 0.0


@dataclass
class EvalReport:
    split: str
    bleu: float
    entity_f1: float
    n_dialogues: int
    n_utterances: int
    n_responses: int
    n_with_gold: int
    n_without_gold: int
    per_team: dict[str, TeamScore] = field(default_factory=dict)
    teams_without_kg: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, indent=2, sort_keys=True)

    def format_table(self) -> str:
        lines = [
            f"split: {self.split}",
            f"dialogues: {self.n_dialogues}  utterances: "
            f"{self.n_utterances}  responses: {self.n_responses} "
            f"(with gold entities: {self.n_with_gold}, without: "
            f"{self.n_without_gold})",
            f"BLEU: {self.bleu:.2f}   entity F1: {self.entity_f1:.2f}",
        ]
        if self.teams_without_kg:
            lines.append("teams without KG: "
                         + ", ".join(sorted(self.teams_without_kg)))
        if self.per_team:
            lines.append("")
            lines.append(f"{'team':<28} {'resp':>5} {'BLEU':>7} {'entF1':>7}")
            for team in sorted(self.per_team):
                ts = self.per_team[team]
                lines.append(f"{team:<28} {ts.n_responses:>5} "
                             f"{ts.bleu:>7.2f} {ts.entity_f1:>7.2f}")
        return "\n".join(lines)


def evaluate_split(model, vocab: Vocabulary, table: EmbeddingTable,
                   dialogues: list[Dialogue],
                   examples: list[TrainingExample],
                   kgs: dict[str, LocalKG], split: str = "test",
                   max_len: int = 40) -> EvalReport:
    """Greedy-decode every example and score the split."""
    from .model import gate_similarity

    rows_cache: dict[str, np.ndarray] = {}
    feed_cache: dict[str, np.ndarray] = {}
    label_cache: dict[str, set[str]] = {}
    hyps: list[list[str]] = []
    refs: list[list[str]] = []
    ent_sets: list[set[str]] = []
    teams: list[str] = []
    for ex in examples:
        kg = kgs.get(ex.team_id) or LocalKG.empty(ex.team_id)
        if ex.team_id not in rows_cache:
            rows_cache[ex.team_id] = embed_triples(kg, table)
            feed_cache[ex.team_id] = first_token_ids(kg, vocab, model.k_max)
            label_cache[ex.team_id] = kg.entity_labels()
        emb_q = query_embedding(ex.query_tokens, table)
        kg_sim, kg_mask = gate_similarity(
            emb_q, rows_cache[ex.team_id], model.k_max)
        result = model.greedy_decode(
            ex.context_ids, emb_q, kg_sim, kg_mask,
            feed_cache[ex.team_id], max_len=max_len)
        tokens, _ = ids_to_tokens(result.ext_ids, vocab, kg)
        hyps.append(tokens)
        refs.append(tokenize(normalize(ex.reference_text)))
        ent_sets.append(label_cache[ex.team_id])
        teams.append(ex.team_id)

    n_with_gold = sum(
        1 for ref, labels in zip(refs, ent_sets)
        if entity_mentions(ref, labels))
    per_team: dict[str, TeamScore] = {}
    for team in sorted(set(teams)):
        sel = [i for i, t in enumerate(teams) if t == team]
        per_team[team] = TeamScore(
            n_responses=len(sel),
            bleu=bleu([hyps[i] for i in sel], [refs[i] for i in sel]),
            entity_f1=entity_f1([hyps[i] for i in sel],
                                [refs[i] for i in sel],
                                [ent_sets[i] for i in sel]))
    return EvalReport(
        split=split,
        bleu=bleu(hyps, refs),
        entity_f1=entity_f1(hyps, refs, ent_sets),
        n_dialogues=len(dialogues),
        n_utterances=sum(len(d.turns) for d in dialogues),
        n_responses=len(examples),
        n_with_gold=n_with_gold,
        n_without_gold=len(examples) - n_with_gold,
        per_team=per_team,
        teams_without_kg=sorted(
            {t for t in teams
             if t not in kgs or kgs[t].k == 0}),
    )
