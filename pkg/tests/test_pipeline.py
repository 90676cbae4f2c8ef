"""Wiring between corpus, KG, vectors, and the model's input arrays."""

import numpy as np
import pytest

from kgcopy.corpus import Vocabulary
from kgcopy.kg import LocalKG, Triple, embed_triples
from kgcopy.model import KGCopyModel, gate_similarity
from kgcopy.pipeline import (
    build_examples, build_gate_inputs, copy_label_tokens, decode_example,
    first_token_ids, ids_to_tokens, query_embedding, team_rows,
)
from kgcopy.vectors import content_word_average, random_table

from helpers import make_dialogue


@pytest.fixture
def setup(arsenal_kg, small_vocab):
    table = random_table(small_vocab, dim=6, salt=1)
    dialogues = [
        make_dialogue("d1", "arsenal", [
            "what is the home ground of arsenal ?",
            "the home ground is emirates stadium .",
        ]),
        make_dialogue("d2", "mystery", ["hi", "a great team ."]),
    ]
    kgs = {"arsenal": arsenal_kg}
    examples = build_examples(dialogues, kgs, small_vocab, window=3,
                              threshold=0.8, max_context_len=80,
                              max_target_len=40)
    return table, dialogues, kgs, examples


def test_build_examples_handles_missing_team(setup, small_vocab):
    _, _, _, examples = setup
    assert [ex.team_id for ex in examples] == ["arsenal", "mystery"]
    # the unknown team falls back to an empty KG: no copies possible
    assert all(lbl == 0 for lbl in examples[1].sentient_labels)
    assert any(lbl == 1 for lbl in examples[0].sentient_labels)


def test_team_rows_only_covers_known_kgs(setup):
    table, _, kgs, _ = setup
    rows = team_rows(kgs, table)
    assert set(rows) == {"arsenal"}
    np.testing.assert_allclose(rows["arsenal"],
                               embed_triples(kgs["arsenal"], table))


def test_query_embedding_matches_content_average(setup):
    table, _, _, _ = setup
    tokens = ["what", "is", "the", "home", "ground", "of", "arsenal", "?"]
    np.testing.assert_allclose(query_embedding(tokens, table),
                               content_word_average(tokens, table))
    np.testing.assert_array_equal(query_embedding([], table), np.zeros(6))


def test_build_gate_inputs_per_example(setup, small_vocab):
    table, _, kgs, examples = setup
    gate = build_gate_inputs(examples, kgs, table, k_max=4)
    n = len(examples)
    assert gate["emb_q"].shape == (n, 6)
    assert gate["kg_sim"].shape == (n, 4)
    assert gate["kg_mask"].shape == (n, 4)

    # row 0 must agree with a direct recomputation for its example
    emb_q = query_embedding(examples[0].query_tokens, table)
    want_sim, want_mask = gate_similarity(
        emb_q, embed_triples(kgs["arsenal"], table), 4)
    np.testing.assert_allclose(gate["emb_q"][0], emb_q)
    np.testing.assert_allclose(gate["kg_sim"][0], want_sim)
    np.testing.assert_array_equal(gate["kg_mask"][0], want_mask)
    # example 1 has no KG
    np.testing.assert_array_equal(gate["kg_mask"][1], np.zeros(4))


def test_first_token_ids(arsenal_kg, small_vocab):
    feed = first_token_ids(arsenal_kg, small_vocab, k_max=5)
    assert feed.shape == (5,)
    assert feed[0] == small_vocab.id_of("emirates")
    assert feed[1] == small_vocab.id_of("laurent")
    assert feed[2] == small_vocab.id_of("unai")
    # padding positions fall back to UNK
    assert feed[3] == feed[4] == small_vocab.UNK_ID


def test_first_token_ids_oov_object(small_vocab):
    kg = LocalKG.from_triples("t", [Triple("t", "r", "zzztoken")])
    feed = first_token_ids(kg, small_vocab, k_max=2)
    assert feed[0] == small_vocab.UNK_ID


def test_copy_label_tokens(arsenal_kg):
    assert copy_label_tokens(arsenal_kg) == [
        ["emirates", "stadium"], ["laurent", "koscielny"], ["unai", "emery"]]


def test_ids_to_tokens_expands_copies(arsenal_kg, small_vocab):
    v = small_vocab.v
    ids = small_vocab.encode(["the", "captain", "is"]) + [v + 1] \
        + small_vocab.encode(["."])
    tokens, copies = ids_to_tokens(ids, small_vocab, arsenal_kg)
    assert tokens == ["the", "captain", "is", "laurent", "koscielny", "."]
    assert copies == [(3, 1)]


def test_ids_to_tokens_multiple_copies(arsenal_kg, small_vocab):
    v = small_vocab.v
    tokens, copies = ids_to_tokens([v + 0, v + 2], small_vocab, arsenal_kg)
    assert tokens == ["emirates", "stadium", "unai", "emery"]
    assert copies == [(0, 0), (2, 2)]


def test_ids_to_tokens_rejects_out_of_range(arsenal_kg, small_vocab):
    with pytest.raises(ValueError):
        ids_to_tokens([small_vocab.v + arsenal_kg.k], small_vocab, arsenal_kg)


def test_decode_example_runs_end_to_end(setup, small_vocab):
    table, _, kgs, examples = setup
    model = KGCopyModel(v=small_vocab.v, d_emb=6, h_dim=5, k_max=4, seed=1)
    tokens, copies, gates = decode_example(
        model, small_vocab, table, kgs["arsenal"],
        examples[0].context_ids, examples[0].query_tokens, max_len=7)
    assert isinstance(tokens, list)
    assert len(gates) <= 7
    assert len(tokens) >= len(gates)   # copies only widen the surface
    assert all(0.0 < g < 1.0 for g in gates)
    for start, pos in copies:
        assert 0 <= pos < kgs["arsenal"].k
        assert 0 <= start < len(tokens)
