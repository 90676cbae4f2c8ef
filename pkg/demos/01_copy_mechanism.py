"""Anatomy of one decoding step: how the gate splits probability mass.

No training here — this walks the moving parts with a tiny untrained
model so the arithmetic is easy to follow:

  1. a local KG and how its triples become similarity scores,
  2. the sentient gate value for a factual vs a chit-chat question,
  3. the mixed distribution: vocabulary mass (1 - s) vs copy mass (s).

Run:  python3 demos/01_copy_mechanism.py
"""

import numpy as np

from kgcopy.corpus import Vocabulary
from kgcopy.kg import LocalKG, Triple, embed_triples
from kgcopy.model import KGCopyModel, gate_similarity, mixed_distribution
from kgcopy.pipeline import query_embedding
from kgcopy.text import normalize, tokenize
from kgcopy.vectors import random_table


def bar(x, width=40):
    n = int(round(x * width))
    return "#" * n + "." * (width - n)


def main():
    print(__doc__)

    # ------------------------------------------------------------ the KG
    kg = LocalKG.from_triples("northern_lions", [
        Triple("northern lions", "home ground", "riverton park"),
        Triple("northern lions", "captain", "arlo maier"),
        Triple("northern lions", "coach", "beno novak"),
        Triple("northern lions", "founded", "1890"),
        Triple("northern lions", "jersey color", "crimson"),
    ])
    print("local KG (the copy source for this conversation):")
    for pos, t in enumerate(kg.triples):
        print(f"  [{pos}] ({t.subject}, {t.relation}, {t.object})")

    # vocabulary + deterministic stand-in word vectors
    words = sorted({w for t in kg.triples
                    for w in tokenize(normalize(
                        f"{t.subject} {t.relation} {t.object}"))}
                   | set("who is the of what do you like football talk "
                         "to me about your team ? play where".split()))
    vocab = Vocabulary(list(Vocabulary.RESERVED) + words)
    table = random_table(vocab, dim=32, salt=7)
    rows = embed_triples(kg, table)   # one vector per triple: subject+relation

    # ------------------------------------------- similarities per question
    print("\nper-triple similarity of two questions (tanh of cosine against")
    print("the subject+relation embedding of each triple):\n")
    for question in ("who is the captain of northern lions ?",
                     "do you like football ?"):
        q_tokens = tokenize(normalize(question))
        emb_q = query_embedding(q_tokens, table)
        kg_sim, kg_mask = gate_similarity(emb_q, rows, k_max=8)
        print(f"  {question!r}")
        for pos, t in enumerate(kg.triples):
            marker = " <-- best" if pos == int(np.argmax(
                np.where(kg_mask > 0, kg_sim, -np.inf))) else ""
            print(f"    {t.relation:<12} {kg_sim[pos]:+.3f}{marker}")
        print()

    # -------------------------------------------------- one decoding step
    print("one decode step of an (untrained) model on the captain question:")
    model = KGCopyModel(v=vocab.v, d_emb=32, h_dim=16, k_max=8,
                        dropout_rnn=0.0, dropout_emb=0.0, seed=1)
    question = "who is the captain of northern lions ?"
    ctx_ids = vocab.encode(tokenize(normalize(question)))
    q_emb = query_embedding(tokenize(normalize(question)), table)
    kg_sim, kg_mask = gate_similarity(q_emb, rows, k_max=8)
    enc = model.encode(ctx_ids)
    out, _ = model.decode_step(Vocabulary.SOS_ID, (enc.context, enc.cell),
                               enc, q_emb, kg_sim, kg_mask, s_prev=0.0)
    v = vocab.v
    print(f"  gate s_t                    = {out.gate:.4f}")
    print(f"  sum of mixed distribution   = {out.mixed.sum():.12f}")
    print(f"  vocabulary mass (= 1 - s_t) = {out.mixed[:v].sum():.4f}")
    print(f"  copy mass       (= s_t)     = {out.mixed[v:].sum():.4f}")
    print("  (untrained gates sit low by design: the bias starts negative")
    print("   so a fresh model prefers writing words over copying)")

    # -------------------------------------- the gate as a mixing dial
    print("\nthe same logits under a forced gate value - the gate is just")
    print("the dial between the two distributions:\n")
    for gate in (0.05, 0.5, 0.95):
        mixed = mixed_distribution(out.vocab_logits, kg_sim, kg_mask, gate)
        vm, km = mixed[:v].sum(), mixed[v:].sum()
        print(f"  s = {gate:.2f}  vocab {bar(vm)} {vm:.2f}")
        print(f"           copy  {bar(km)} {km:.2f}")
        best = int(np.argmax(mixed))
        what = (f"word {vocab.decode([best])[0]!r}" if best < v
                else f"copy of triple {best - v} "
                     f"-> {kg.triples[best - v].object!r}")
        print(f"           argmax would emit: {what}\n")


if __name__ == "__main__":
    main()
