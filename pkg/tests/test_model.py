"""Network-level oracles: gate similarity, mixture, attention, decoding,
loss equivalence across the batched and single-example paths, and
checkpoint round trips."""

import json

import numpy as np
import pytest

from kgcopy.corpus import Vocabulary
from kgcopy.model import (
    KGCopyModel, gate_similarity, load_checkpoint, mixed_distribution,
    save_checkpoint, sequence_loss,
)

from helpers import tiny_batch

TANH1 = float(np.tanh(1.0))  # 0.7615941559557649


# -------------------------------------------------------------- similarity

def test_gate_similarity_is_tanh_of_cosine():
    emb_q = np.array([1.0, 0.0])
    rows = np.array([[1.0, 0.0], [0.0, 1.0], [-2.0, 0.0]])
    kg_sim, kg_mask = gate_similarity(emb_q, rows, k_max=5)
    np.testing.assert_allclose(kg_sim[:3], [TANH1, 0.0, -TANH1], atol=1e-15)
    np.testing.assert_array_equal(kg_mask, [1, 1, 1, 0, 0])
    assert kg_sim[3] == kg_sim[4] == 0.0


def test_gate_similarity_scale_invariance(rng):
    emb_q = rng.normal(size=6)
    rows = rng.normal(size=(4, 6))
    base, _ = gate_similarity(emb_q, rows, k_max=4)
    scaled, _ = gate_similarity(3.7 * emb_q, 0.25 * rows, k_max=4)
    np.testing.assert_allclose(scaled, base, atol=1e-12)


def test_gate_similarity_zero_vectors():
    rows = np.array([[0.0, 0.0], [1.0, 1.0]])
    kg_sim, kg_mask = gate_similarity(np.array([1.0, 0.0]), rows, k_max=2)
    assert kg_sim[0] == 0.0
    assert kg_mask[0] == 1.0  # stays in the support, contributes cos 0
    sim_zero_q, _ = gate_similarity(np.zeros(2), rows, k_max=2)
    np.testing.assert_array_equal(sim_zero_q, [0.0, 0.0])


def test_gate_similarity_empty_kg():
    kg_sim, kg_mask = gate_similarity(np.ones(3), np.zeros((0, 3)), k_max=4)
    np.testing.assert_array_equal(kg_sim, np.zeros(4))
    np.testing.assert_array_equal(kg_mask, np.zeros(4))


# ----------------------------------------------------------------- mixture

def test_mixed_distribution_endpoints(rng):
    logits = rng.normal(size=7)
    kg_sim = np.array([0.3, -0.1, 0.8, 0.0, 0.0])
    kg_mask = np.array([1.0, 1.0, 1.0, 0.0, 0.0])

    at_zero = mixed_distribution(logits, kg_sim, kg_mask, 0.0)
    np.testing.assert_allclose(at_zero[7:], np.zeros(5), atol=1e-15)
    exp = np.exp(logits - logits.max())
    np.testing.assert_allclose(at_zero[:7], exp / exp.sum(), atol=1e-12)

    at_one = mixed_distribution(logits, kg_sim, kg_mask, 1.0)
    np.testing.assert_allclose(at_one[:7], np.zeros(7), atol=1e-15)
    ek = np.exp(kg_sim[:3] - kg_sim[:3].max())
    np.testing.assert_allclose(at_one[7:10], ek / ek.sum(), atol=1e-12)
    np.testing.assert_array_equal(at_one[10:], [0.0, 0.0])


def test_mixed_distribution_mass_split(rng):
    logits = rng.normal(size=9)
    kg_sim = rng.uniform(-1, 1, size=4)
    kg_mask = np.ones(4)
    for s in (0.05, 0.3, 0.77):
        mixed = mixed_distribution(logits, kg_sim, kg_mask, s)
        assert mixed.shape == (13,)
        assert abs(mixed.sum() - 1.0) < 1e-12
        assert abs(mixed[:9].sum() - (1.0 - s)) < 1e-12
        assert abs(mixed[9:].sum() - s) < 1e-12
        assert np.all(mixed >= 0.0)


def test_mixed_distribution_without_kg_keeps_vocab_mass(rng):
    logits = rng.normal(size=5)
    mixed = mixed_distribution(logits, np.zeros(3), np.zeros(3), 0.9)
    assert abs(mixed[:5].sum() - 1.0) < 1e-12
    np.testing.assert_array_equal(mixed[5:], np.zeros(3))


def test_mixed_distribution_batched_matches_single(rng):
    logits = rng.normal(size=(4, 6))
    kg_sim = rng.uniform(-1, 1, size=(4, 3))
    kg_mask = np.ones((4, 3))
    kg_mask[2] = 0.0
    gates = np.array([0.1, 0.5, 0.9, 0.4])
    batched = mixed_distribution(logits, kg_sim, kg_mask, gates)
    assert batched.shape == (4, 9)
    for b in range(4):
        row = mixed_distribution(logits[b], kg_sim[b], kg_mask[b],
                                 float(gates[b]))
        np.testing.assert_allclose(batched[b], row, atol=1e-14)


# --------------------------------------------------------------- attention

def test_attend_single_step_is_trivial(small_model):
    enc = small_model.encode([2, 5])
    one = type(enc)(hidden=enc.hidden[:1], context=enc.hidden[0],
                    cell=enc.cell)
    alpha, ctx = small_model.attend(one, np.zeros(small_model.h))
    np.testing.assert_allclose(alpha, [1.0])
    np.testing.assert_allclose(ctx, one.hidden[0])


def test_attend_uniform_over_identical_states(small_model, rng):
    enc = small_model.encode([2, 5, 6])
    row = rng.normal(size=small_model.h)
    uniform = type(enc)(hidden=np.tile(row, (4, 1)), context=row, cell=row)
    alpha, ctx = small_model.attend(uniform, rng.normal(size=small_model.h))
    np.testing.assert_allclose(alpha, np.full(4, 0.25), atol=1e-12)
    np.testing.assert_allclose(ctx, row, atol=1e-12)


def test_attend_matches_per_step_recomputation(small_model, rng):
    enc = small_model.encode([2, 5, 6, 7, 8])
    h_dec = rng.normal(size=small_model.h)
    alpha, ctx = small_model.attend(enc, h_dec)

    h = small_model.h
    Wc = small_model.params["att_Wc"]
    ws = small_model.params["att_ws"]
    scores = []
    for t in range(enc.hidden.shape[0]):   # explicit loop, one step at a time
        u_t = np.tanh(enc.hidden[t] @ Wc[:h] + h_dec @ Wc[h:])
        scores.append(float(u_t @ ws))
    e = np.exp(np.array(scores) - max(scores))
    want_alpha = e / e.sum()
    np.testing.assert_allclose(alpha, want_alpha, atol=1e-12)
    np.testing.assert_allclose(ctx, want_alpha @ enc.hidden, atol=1e-12)
    assert abs(alpha.sum() - 1.0) < 1e-12


# ------------------------------------------------- batched vs single paths

def single_path_loss(model, batch, b, n_steps):
    """Per-example loss through encode/decode_step/sequence_loss."""
    ctx_len = int(batch["ctx_mask"][b].sum())
    enc = model.encode(batch["ctx"][b][:ctx_len])
    state = (enc.context, enc.cell)
    outs, s_prev = [], 0.0
    for t in range(n_steps):
        out, state = model.decode_step(
            int(batch["tin"][b, t]), state, enc, batch["emb_q"][b],
            batch["kg_sim"][b], batch["kg_mask"][b], s_prev)
        outs.append(out)
        s_prev = out.gate
    return sequence_loss(outs, batch["tout"][b][:n_steps],
                         batch["slab"][b][:n_steps])


def test_forward_batch_matches_single_example_path():
    model = KGCopyModel(v=9, d_emb=5, h_dim=4, k_max=3, seed=7)
    batch = tiny_batch()
    L_tot, L_vocab, L_sent, cache = model.forward_batch(batch, train=False)
    assert abs(L_tot - (L_vocab + L_sent)) < 1e-12

    n0 = int(batch["tmask"][0].sum())
    n1 = int(batch["tmask"][1].sum())
    tot0, v0, s0 = single_path_loss(model, batch, 0, n0)
    tot1, v1, s1 = single_path_loss(model, batch, 1, n1)
    # the batched loss is the per-step mean over all unmasked steps
    want_v = (v0 * n0 + v1 * n1) / (n0 + n1)
    want_s = (s0 * n0 + s1 * n1) / (n0 + n1)
    assert abs(L_vocab - want_v) < 1e-9
    assert abs(L_sent - want_s) < 1e-9
    assert cache["n_steps"] == n0 + n1


def test_forward_batch_ignores_padding_content():
    model = KGCopyModel(v=9, d_emb=5, h_dim=4, k_max=3, seed=7)
    batch = tiny_batch()
    base = model.forward_batch(batch, train=False)[0]
    poked = {k: np.copy(v) for k, v in batch.items()}
    poked["ctx"][1, 3] = 8          # under ctx_mask 0
    poked["tin"][1, 4] = 7          # under tmask 0
    poked["tout"][1, 3] = 5
    poked["slab"][1, 4] = 1.0
    after = model.forward_batch(poked, train=False)[0]
    assert abs(base - after) < 1e-12


def test_forward_batch_train_mode_needs_rng():
    model = KGCopyModel(v=9, d_emb=5, h_dim=4, k_max=3, seed=7,
                        dropout_rnn=0.3, dropout_emb=0.4)
    batch = tiny_batch()
    a = model.forward_batch(batch, train=True,
                            rng=np.random.default_rng(5))[0]
    b = model.forward_batch(batch, train=True,
                            rng=np.random.default_rng(5))[0]
    c = model.forward_batch(batch, train=True,
                            rng=np.random.default_rng(6))[0]
    assert a == b
    assert a != c
    # eval mode is dropout-free and deterministic
    assert model.forward_batch(batch)[0] == model.forward_batch(batch)[0]


def test_forward_batch_accuracy_range():
    model = KGCopyModel(v=9, d_emb=5, h_dim=4, k_max=3, seed=7)
    batch = tiny_batch()
    _, _, _, cache = model.forward_batch(batch, train=False, compute_acc=True)
    tok_acc, sent_acc = cache["acc"]
    assert 0.0 <= tok_acc <= 1.0
    assert 0.0 <= sent_acc <= 1.0


# ---------------------------------------------------------------- decoding

def test_greedy_decode_stops_on_eos(small_model):
    small_model.params["out_b"][Vocabulary.EOS_ID] = 50.0
    result = small_model.greedy_decode(
        [2, 5, 6], np.zeros(small_model.d), np.zeros(small_model.k_max),
        np.zeros(small_model.k_max), np.full(small_model.k_max, 1),
        max_len=10, keep_states=True)
    assert result.ext_ids == []
    assert len(result.states) == 1


def test_greedy_decode_respects_max_len(small_model):
    small_model.params["out_b"][7] = 50.0   # never EOS
    result = small_model.greedy_decode(
        [2, 5], np.zeros(small_model.d), np.zeros(small_model.k_max),
        np.zeros(small_model.k_max), np.full(small_model.k_max, 1),
        max_len=6)
    assert result.ext_ids == [7] * 6
    assert len(result.gates) == 6
    assert all(0.0 < g < 1.0 for g in result.gates)


def test_greedy_decode_copy_feedback(small_model, rng):
    # saturate the gate so the argmax lands in the copy segment
    small_model.params["gate_b"] = np.full((), 50.0)
    v, k_max = small_model.v, small_model.k_max
    emb_q = rng.normal(size=small_model.d)
    kg_sim = np.array([0.1, 0.7, -0.2, 0.0])
    kg_mask = np.array([1.0, 1.0, 1.0, 0.0])
    feed = np.array([5, 6, 7, 1])
    result = small_model.greedy_decode([2, 5, 6], emb_q, kg_sim, kg_mask,
                                       feed, max_len=4)
    assert len(result.ext_ids) == 4
    assert all(pick == v + 1 for pick in result.ext_ids)  # argmax kg row
    assert all(g > 0.99 for g in result.gates)


def test_greedy_decode_deterministic(small_model, rng):
    emb_q = rng.normal(size=small_model.d)
    kg_sim, kg_mask = np.zeros(4), np.zeros(4)
    args = ([2, 6, 7], emb_q, kg_sim, kg_mask, np.full(4, 1))
    a = small_model.greedy_decode(*args, max_len=8)
    b = small_model.greedy_decode(*args, max_len=8)
    assert a.ext_ids == b.ext_ids
    assert a.gates == b.gates


def test_greedy_decode_rejects_bad_max_len(small_model):
    with pytest.raises(ValueError):
        small_model.greedy_decode([2], np.zeros(small_model.d),
                                  np.zeros(4), np.zeros(4), np.full(4, 1),
                                  max_len=0)


def test_encode_rejects_empty_context(small_model):
    with pytest.raises(ValueError):
        small_model.encode([])


def test_decode_step_mixture_sums_to_one(small_model, rng):
    enc = small_model.encode([2, 5, 6])
    out, _ = small_model.decode_step(
        5, (enc.context, enc.cell), enc, rng.normal(size=small_model.d),
        np.array([0.5, -0.5, 0.0, 0.0]), np.array([1.0, 1.0, 1.0, 0.0]), 0.0)
    assert abs(out.mixed.sum() - 1.0) < 1e-12
    assert abs(out.mixed[:small_model.v].sum() - (1.0 - out.gate)) < 1e-12
    assert out.kg_scores[3] == -np.inf


def test_raw_mixture_scores():
    model = KGCopyModel(v=9, d_emb=5, h_dim=4, k_max=3, seed=7,
                        raw_mixture=True)
    enc = model.encode([2, 5])
    emb_q = np.zeros(5)
    kg_sim = np.array([0.4, -0.2, 0.0])
    kg_mask = np.array([1.0, 1.0, 0.0])
    out, _ = model.decode_step(5, (enc.context, enc.cell), enc, emb_q,
                               kg_sim, kg_mask, 0.0)
    s = out.gate
    np.testing.assert_allclose(out.raw_scores[:9],
                               (1.0 - s) * out.vocab_logits, atol=1e-12)
    np.testing.assert_allclose(out.raw_scores[9:11], s * kg_sim[:2],
                               atol=1e-12)
    assert out.raw_scores[11] == -np.inf
    # the raw form is a scoring rule, not a distribution
    assert abs(out.raw_scores[:9].sum() - 1.0) > 1e-3


# ------------------------------------------------------------- checkpoints

def make_checkpoint(tmp_path, seed=0):
    vocab = Vocabulary(list(Vocabulary.RESERVED) + ["a", "b", "c"])
    model = KGCopyModel(v=vocab.v, d_emb=4, h_dim=3, k_max=2, seed=seed)
    static = np.random.default_rng(seed).normal(size=(vocab.v, 4))
    unk = static.mean(axis=0)
    path = tmp_path / "model.npz"
    save_checkpoint(path, model, vocab, static, unk,
                    config={"window": 2, "seed": seed},
                    metrics={"bleu": 12.5})
    return path, model, vocab, static, unk


def test_checkpoint_round_trip(tmp_path):
    path, model, vocab, static, unk = make_checkpoint(tmp_path)
    loaded, vocab2, static2, unk2, meta = load_checkpoint(path)
    assert vocab2.tokens == vocab.tokens
    np.testing.assert_array_equal(static2, static)
    np.testing.assert_array_equal(unk2, unk)
    assert meta["config"] == {"window": 2, "seed": 0}
    assert meta["metrics"] == {"bleu": 12.5}
    for name, arr in model.params.items():
        np.testing.assert_array_equal(loaded.params[name], arr)
    # identical greedy behaviour after the round trip
    emb_q = np.ones(4)
    kg_sim = np.array([0.3, -0.3])
    kg_mask = np.array([1.0, 1.0])
    feed = np.array([5, 6])
    a = model.greedy_decode([2, 5, 6], emb_q, kg_sim, kg_mask, feed)
    b = loaded.greedy_decode([2, 5, 6], emb_q, kg_sim, kg_mask, feed)
    assert a.ext_ids == b.ext_ids


def _rewrite_npz(path, mutate):
    with np.load(path, allow_pickle=True) as npz:
        data = {k: npz[k] for k in npz.files}
    mutate(data)
    np.savez(path, **data)


def test_checkpoint_detects_vocab_tampering(tmp_path):
    path, *_ = make_checkpoint(tmp_path)

    def swap_tokens(data):
        tokens = list(data["vocab_tokens"])
        tokens[5], tokens[6] = tokens[6], tokens[5]
        data["vocab_tokens"] = np.asarray(tokens, dtype=object)

    _rewrite_npz(path, swap_tokens)
    with pytest.raises(ValueError, match="hash"):
        load_checkpoint(path)


def test_checkpoint_rejects_unknown_format(tmp_path):
    path, *_ = make_checkpoint(tmp_path)

    def bump_format(data):
        meta = json.loads(str(data["__meta__"]))
        meta["format"] = "something-else/9"
        data["__meta__"] = np.asarray(json.dumps(meta))

    _rewrite_npz(path, bump_format)
    with pytest.raises(ValueError, match="format"):
        load_checkpoint(path)


# ------------------------------------------------------------------- init

def test_init_determinism_and_emb_init():
    a = KGCopyModel(v=11, d_emb=6, h_dim=5, k_max=3, seed=9)
    b = KGCopyModel(v=11, d_emb=6, h_dim=5, k_max=3, seed=9)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    table = np.arange(66, dtype=np.float64).reshape(11, 6)
    c = KGCopyModel(v=11, d_emb=6, h_dim=5, k_max=3, seed=9, emb_init=table)
    np.testing.assert_array_equal(c.params["emb"], table)
    with pytest.raises(ValueError):
        KGCopyModel(v=11, d_emb=6, h_dim=5, k_max=3, emb_init=np.zeros((2, 2)))


def test_init_gate_prior_is_negative():
    model = KGCopyModel(v=8, d_emb=4, h_dim=3, k_max=2, seed=0)
    assert float(model.params["gate_b"]) < 0.0
    # forget-gate bias starts open
    h = model.h
    np.testing.assert_array_equal(model.params["enc_b"][h:2 * h], np.ones(h))


def test_sequence_loss_validates_lengths(small_model):
    with pytest.raises(ValueError):
        sequence_loss([], [1], [0])
