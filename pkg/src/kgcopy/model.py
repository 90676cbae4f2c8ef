"""Copy-gated encoder-decoder network, gradients derived by hand.

Architecture, per decoding step t:

* a single-layer LSTM encoder turns the id-encoded context into hidden
  states ``h_1..h_T``; the decoder LSTM starts from the encoder's final
  hidden and cell state,
* additive attention ``alpha = softmax(ws . tanh(Wc [h_j; h^d_t]))``
  yields a context vector, and ``o_t = Wo [h^d_t; ctx]`` scores the
  vocabulary,
* the gate compares a fixed per-example query embedding against the
  triple rows of the local KG (``kg_sim_i = tanh(cos(q, row_i))``) and
  squashes ``[q + emb_d; kg_sim; s_prev]`` through a logistic unit into
  ``s_t``,
* the output distribution is the two-segment mixture
  ``[(1 - s_t) softmax(o_t), s_t softmax(kg_sim)]`` over the extended
  space of v vocabulary words plus k_max triple positions.

Everything is plain numpy in float64. ``forward_batch`` caches enough
to run ``backward_batch``, which returns exact gradients of the
multi-task loss (token cross-entropy over the mixture plus binary
cross-entropy on the gate) for every trainable array. Loss terms are
computed in logit space (softplus / log-sum-exp), mathematically equal
to ``-log mixed[target]`` but immune to underflow; the 1e-12
probability floor only guards the materialized-probability paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary

__all__ = [
    "KGCopyModel",
    "EncoderState",
    "DecodeStepOutput",
    "GreedyResult",
    "gate_similarity",
    "mixed_distribution",
    "sequence_loss",
    "save_checkpoint",
    "load_checkpoint",
]

PROB_FLOOR = 1e-12
CHECKPOINT_FORMAT = "kgcopy-checkpoint/1"

PAD_ID = Vocabulary.PAD_ID
SOS_ID = Vocabulary.SOS_ID
EOS_ID = Vocabulary.EOS_ID


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    # log(1 + e^x), stable on both tails
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _logsumexp(x, axis=-1, keepdims=False, mask=None):
    if mask is not None:
        x = np.where(mask > 0, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def _masked_softmax(x, mask, axis=-1):
    x = np.where(mask > 0, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m) * (mask > 0)
    total = e.sum(axis=axis, keepdims=True)
    return np.divide(e, total, out=np.zeros_like(e), where=total > 0)


def gate_similarity(emb_q: np.ndarray, rows: np.ndarray, k_max: int):
    """tanh of cosine similarity between the query and each triple row.

    Returns ``(kg_sim, kg_mask)`` both of length ``k_max``; positions at
    or beyond the KG's k are masked and zero. A zero query or zero row
    contributes similarity 0 (its row behaves as masked in spirit but
    stays in the distribution support).
    """
    k = rows.shape[0] if rows is not None else 0
    kg_sim = np.zeros(k_max, dtype=np.float64)
    kg_mask = np.zeros(k_max, dtype=np.float64)
    if k:
        qn = float(np.linalg.norm(emb_q))
        rn = np.linalg.norm(rows, axis=1)
        denom = qn * rn
        cos = np.zeros(k)
        ok = denom > 0
        if qn > 0:
            cos[ok] = (rows[ok] @ emb_q) / denom[ok]
        kg_sim[:k] = np.tanh(cos)
        kg_mask[:k] = 1.0
    return kg_sim, kg_mask


def mixed_distribution(vocab_logits, kg_sim, kg_mask, gate):
    """Materialize the extended-space probability vector.

    ``(1 - s) softmax(logits)`` concatenated with ``s softmax(kg_sim)``
    over unmasked entries; with no unmasked entry the whole mass stays
    on the vocabulary segment.
    """
    vocab_logits = np.atleast_2d(vocab_logits)
    kg_sim = np.atleast_2d(kg_sim)
    kg_mask = np.atleast_2d(kg_mask)
    s = np.atleast_1d(np.asarray(gate, dtype=np.float64))
    pv = np.exp(vocab_logits - _logsumexp(vocab_logits, axis=1, keepdims=True))
    pkg = _masked_softmax(kg_sim, kg_mask, axis=1)
    has_kg = (kg_mask.sum(axis=1) > 0).astype(np.float64)
    s_eff = s * has_kg
    mixed = np.concatenate(
        [(1.0 - s_eff)[:, None] * pv, s_eff[:, None] * pkg], axis=1)
    return mixed[0] if mixed.shape[0] == 1 and np.ndim(gate) == 0 else mixed


@dataclass
class EncoderState:
    """Hidden sequence plus the summary that seeds the decoder."""
    hidden: np.ndarray          # (T, h)
    context: np.ndarray         # (h,) == hidden[-1]
    cell: np.ndarray            # (h,) final LSTM cell state


@dataclass
class DecodeStepOutput:
    vocab_logits: np.ndarray    # (v,)
    kg_scores: np.ndarray       # (k_max,), -inf beyond k
    gate: float                 # s_t in (0, 1)
    mixed: np.ndarray           # (v + k_max,) probability vector
    raw_scores: np.ndarray | None = None   # literal-formula scores, optional


@dataclass
class GreedyResult:
    ext_ids: list[int]                    # emitted extended-space ids
    gates: list[float]                    # s_t trace
    states: list[tuple] = field(default_factory=list)  # (h, c) per step


def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


class KGCopyModel:
    """Trainable parameters plus forward/backward passes.

    ``params`` maps names to float64 arrays; anything in it is trained.
    """

    ENCODER_GROUP = ("emb", "enc_Wx", "enc_Wh", "enc_b")

    def __init__(self, v: int, d_emb: int = 300, h_dim: int = 64,
                 k_max: int = 256, dropout_rnn: float = 0.3,
                 dropout_emb: float = 0.4, raw_mixture: bool = False,
                 seed: int = 0, emb_init: np.ndarray | None = None):
        self.v, self.d, self.h, self.k_max = v, d_emb, h_dim, k_max
        self.dropout_rnn = dropout_rnn
        self.dropout_emb = dropout_emb
        self.raw_mixture = raw_mixture
        rng = np.random.default_rng(seed)
        d, h = d_emb, h_dim
        lstm_scale = 1.0 / np.sqrt(h)
        p = {}
        if emb_init is not None:
            if emb_init.shape != (v, d):
                raise ValueError(f"emb_init shape {emb_init.shape} != {(v, d)}")
            p["emb"] = emb_init.astype(np.float64).copy()
        else:
            p["emb"] = _uniform(rng, (v, d), 0.1)
            p["emb"][PAD_ID] = 0.0
        for side in ("enc", "dec"):
            p[f"{side}_Wx"] = _uniform(rng, (d, 4 * h), lstm_scale)
            p[f"{side}_Wh"] = _uniform(rng, (h, 4 * h), lstm_scale)
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0  # forget-gate bias
            p[f"{side}_b"] = b
        p["att_Wc"] = _uniform(rng, (2 * h, h), 1.0 / np.sqrt(2 * h))
        p["att_ws"] = _uniform(rng, (h,), 1.0 / np.sqrt(h))
        p["out_W"] = _uniform(rng, (2 * h, v), 1.0 / np.sqrt(2 * h))
        p["out_b"] = np.zeros(v)
        gate_dim = d + k_max + 1
        p["gate_w"] = _uniform(rng, (gate_dim,), 1.0 / np.sqrt(gate_dim))
        # copy steps are rare; a negative prior keeps the untrained gate
        # quiet so early checkpoints do not spam copies
        p["gate_b"] = np.full((), -1.0)
        self.params = p

    # ------------------------------------------------------------------
    # primitive cells

    def _lstm_forward(self, x, h_prev, c_prev, side):
        p = self.params
        h = self.h
        z = x @ p[f"{side}_Wx"] + h_prev @ p[f"{side}_Wh"] + p[f"{side}_b"]
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h:2 * h])
        g = np.tanh(z[:, 2 * h:3 * h])
        o = _sigmoid(z[:, 3 * h:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h_new = o * tc
        cache = (x, h_prev, c_prev, i, f, g, o, tc)
        return h_new, c, cache

    def _lstm_backward(self, dh, dc, cache, side, grads):
        x, h_prev, c_prev, i, f, g, o, tc = cache
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di, dg, df = dc * g, dc * i, dc * c_prev
        dc_prev = dc * f
        da = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        # gate order above must mirror _lstm_forward: i, f, g, o
        p = self.params
        grads[f"{side}_Wx"] += x.T @ da
        grads[f"{side}_Wh"] += h_prev.T @ da
        grads[f"{side}_b"] += da.sum(axis=0)
        dx = da @ p[f"{side}_Wx"].T
        dh_prev = da @ p[f"{side}_Wh"].T
        return dx, dh_prev, dc_prev

    def _dropout_mask(self, rng, shape, p):
        if rng is None or p <= 0:
            return None
        return (rng.random(shape) >= p) / (1.0 - p)

    # ------------------------------------------------------------------
    # batched forward / backward

    def forward_batch(self, batch, train: bool = False, rng=None,
                      compute_acc: bool = False):
        """Teacher-forced pass; returns (L_tot, L_vocab, L_sent, cache).

        ``batch`` holds ctx (B,Tc) int ids, ctx_mask, tin (B,Tt) decoder
        input ids, tout extended targets, tmask, slab sentient labels,
        emb_q (B,d), kg_sim/kg_mask (B,K). With ``train`` dropout is
        sampled from ``rng``; otherwise the pass is deterministic.
        """
        p = self.params
        B, Tc = batch["ctx"].shape
        Tt = batch["tin"].shape[1]
        h, d, v, K = self.h, self.d, self.v, self.k_max
        ctx_mask, tmask = batch["ctx_mask"], batch["tmask"]
        kg_sim, kg_mask = batch["kg_sim"], batch["kg_mask"]
        has_kg = (kg_mask.sum(axis=1) > 0).astype(np.float64)
        lse_kg = np.where(
            has_kg > 0, _logsumexp(kg_sim, axis=1, mask=kg_mask), 0.0)

        if not train:
            rng = None
        X = p["emb"][batch["ctx"]]                       # (B,Tc,d)
        enc_emb_mask = self._dropout_mask(rng, X.shape, self.dropout_emb)
        Xd_in = X if enc_emb_mask is None else X * enc_emb_mask

        enc_caches = []
        H = np.zeros((B, Tc, h))
        h_t = np.zeros((B, h))
        c_t = np.zeros((B, h))
        for t in range(Tc):
            h_new, c_new, cc = self._lstm_forward(Xd_in[:, t], h_t, c_t, "enc")
            m = ctx_mask[:, t:t + 1]
            h_t = m * h_new + (1.0 - m) * h_t
            c_t = m * c_new + (1.0 - m) * c_t
            enc_caches.append(cc)
            H[:, t] = h_t
        enc_rnn_mask = self._dropout_mask(rng, H.shape, self.dropout_rnn)
        H_use = H if enc_rnn_mask is None else H * enc_rnn_mask
        H_part = H_use @ p["att_Wc"][:h]                 # (B,Tc,h)

        Xt = p["emb"][batch["tin"]]                      # (B,Tt,d) raw; gate path
        dec_emb_mask = self._dropout_mask(rng, Xt.shape, self.dropout_emb)
        Xt_in = Xt if dec_emb_mask is None else Xt * dec_emb_mask
        dec_rnn_mask = self._dropout_mask(rng, (B, Tt, h), self.dropout_rnn)

        Wc2 = p["att_Wc"][h:]
        dec_caches = []
        hd, cd = h_t.copy(), c_t.copy()
        s_post = np.zeros(B)
        tout = batch["tout"]
        slab = batch["slab"]
        emb_q = batch["emb_q"]

        ce_rows = np.zeros((B, Tt))
        bce_rows = np.zeros((B, Tt))
        # backward needs per-step: cell cache, hd_use, alpha, s_prev, s_new,
        # pv (for CE softmax grad), and which rows were copy targets
        correct_tok = correct_sent = 0.0

        for t in range(Tt):
            h_new, c_new, cc = self._lstm_forward(Xt_in[:, t], hd, cd, "dec")
            m = tmask[:, t:t + 1]
            hd = m * h_new + (1.0 - m) * hd
            cd = m * c_new + (1.0 - m) * cd
            hd_use = hd if dec_rnn_mask is None else hd * dec_rnn_mask[:, t]

            u = np.tanh(H_part + (hd_use @ Wc2)[:, None, :])   # (B,Tc,h)
            e = u @ p["att_ws"]                                # (B,Tc)
            alpha = _masked_softmax(e, ctx_mask, axis=1)
            ctxv = np.einsum("bt,bth->bh", alpha, H_use)

            cat = np.concatenate([hd_use, ctxv], axis=1)       # (B,2h)
            o = cat @ p["out_W"] + p["out_b"]                  # (B,v)

            emb_d = Xt[:, t]
            s_prev_in = s_post
            zq = emb_q + emb_d
            a = zq @ p["gate_w"][:d] + kg_sim @ p["gate_w"][d:d + K] \
                + s_prev_in * p["gate_w"][d + K] + p["gate_b"]
            s_new = _sigmoid(a)
            mf = tmask[:, t]
            s_post = mf * s_new + (1.0 - mf) * s_prev_in

            tgt = tout[:, t]
            is_copy = tgt >= v
            lse_o = _logsumexp(o, axis=1)
            safe_tgt = np.where(is_copy, 0, tgt)
            log_pv_tgt = o[np.arange(B), safe_tgt] - lse_o
            j = np.where(is_copy, tgt - v, 0)
            log_pkg_j = kg_sim[np.arange(B), j] - lse_kg
            ce = np.where(
                is_copy,
                _softplus(-a) - log_pkg_j,
                has_kg * _softplus(a) - log_pv_tgt)
            bce = slab[:, t] * _softplus(-a) \
                + (1.0 - slab[:, t]) * _softplus(a)
            ce_rows[:, t] = ce * mf
            bce_rows[:, t] = bce * mf

            pv = np.exp(o - lse_o[:, None])
            if compute_acc:
                s_eff = s_new * has_kg
                best_v = pv.max(axis=1)
                pkg = _masked_softmax(kg_sim, kg_mask, axis=1)
                best_k = pkg.max(axis=1)
                pick_kg = s_eff * best_k > (1.0 - s_eff) * best_v
                pred = np.where(pick_kg,
                                v + pkg.argmax(axis=1), pv.argmax(axis=1))
                correct_tok += float(((pred == tgt) * mf).sum())
                correct_sent += float(
                    (((s_new > 0.5) == (slab[:, t] > 0.5)) * mf).sum())

            dec_caches.append({
                "cell": cc, "hd_use": hd_use, "alpha": alpha, "u_ref": None,
                "s_prev": s_prev_in, "s_new": s_new, "pv": pv,
                "is_copy": is_copy, "a": a, "ctxv": ctxv,
            })

        n_steps = float(tmask.sum())
        scale = 1.0 / max(n_steps, 1.0)
        L_vocab = float(ce_rows.sum() * scale)
        L_sent = float(bce_rows.sum() * scale)
        L_tot = L_vocab + L_sent

        cache = {
            "batch": batch, "scale": scale, "has_kg": has_kg,
            "enc_caches": enc_caches, "H": H, "H_use": H_use,
            "H_part": H_part, "enc_rnn_mask": enc_rnn_mask,
            "enc_emb_mask": enc_emb_mask, "dec_emb_mask": dec_emb_mask,
            "dec_rnn_mask": dec_rnn_mask, "dec_caches": dec_caches,
            "Xt": Xt, "Xd_in": Xd_in, "Xt_in": Xt_in,
            "n_steps": n_steps,
        }
        if compute_acc:
            cache["acc"] = (correct_tok / max(n_steps, 1.0),
                            correct_sent / max(n_steps, 1.0))
        return L_tot, L_vocab, L_sent, cache

    def zero_grads(self):
        return {k: np.zeros_like(a) for k, a in self.params.items()}

    def backward_batch(self, cache):
        """Gradients of L_tot for the cached forward pass."""
        p = self.params
        batch = cache["batch"]
        B, Tc = batch["ctx"].shape
        Tt = batch["tin"].shape[1]
        h, d, v, K = self.h, self.d, self.v, self.k_max
        scale = cache["scale"]
        has_kg = cache["has_kg"]
        kg_sim = batch["kg_sim"]
        ctx_mask, tmask = batch["ctx_mask"], batch["tmask"]
        tout, slab, emb_q = batch["tout"], batch["slab"], batch["emb_q"]
        H_use, H_part = cache["H_use"], cache["H_part"]
        Wc1, Wc2 = p["att_Wc"][:h], p["att_Wc"][h:]

        grads = self.zero_grads()
        dH_use = np.zeros_like(H_use)
        dh_carry = np.zeros((B, h))
        dc_carry = np.zeros((B, h))
        ds_carry = np.zeros(B)

        for t in reversed(range(Tt)):
            dc_t = cache["dec_caches"][t]
            mf = tmask[:, t]
            m = mf[:, None]
            s_new, s_prev_in = dc_t["s_new"], dc_t["s_prev"]
            pv, is_copy, alpha = dc_t["pv"], dc_t["is_copy"], dc_t["alpha"]
            hd_use, ctxv = dc_t["hd_use"], dc_t["ctxv"]
            tgt = tout[:, t]

            # loss terms in gate-logit space
            da = np.where(is_copy, s_new - 1.0, has_kg * s_new)
            da = (da + (s_new - slab[:, t])) * mf * scale
            # gate recurrence: s_post = m s_new + (1-m) s_prev
            da += ds_carry * mf * s_new * (1.0 - s_new)
            ds_pass = ds_carry * (1.0 - mf)

            # vocabulary cross-entropy rows
            do = pv * (~is_copy * mf * scale)[:, None]
            safe_tgt = np.where(is_copy, 0, tgt)
            rows = np.arange(B)
            sub = np.zeros((B, v))
            sub[rows, safe_tgt] = (~is_copy * mf * scale)
            do -= sub

            # gate linear layer
            emb_d = cache["Xt"][:, t]
            zq = emb_q + emb_d
            grads["gate_w"][:d] += da @ zq
            grads["gate_w"][d:d + K] += da @ kg_sim
            grads["gate_w"][d + K] += float(da @ s_prev_in)
            grads["gate_b"] += da.sum()
            dzq = da[:, None] * p["gate_w"][None, :d]
            np.add.at(grads["emb"], batch["tin"][:, t], dzq)
            ds_carry = ds_pass + da * p["gate_w"][d + K]

            # output projection
            cat = np.concatenate([hd_use, ctxv], axis=1)
            grads["out_W"] += cat.T @ do
            grads["out_b"] += do.sum(axis=0)
            dcat = do @ p["out_W"].T
            dhd_use = dcat[:, :h]
            dctxv = dcat[:, h:]

            # attention backward; u recomputed to keep the cache small
            u = np.tanh(H_part + (hd_use @ Wc2)[:, None, :])
            dalpha = np.einsum("bh,bth->bt", dctxv, H_use)
            dH_use += alpha[:, :, None] * dctxv[:, None, :]
            inner = (dalpha * alpha).sum(axis=1, keepdims=True)
            de = alpha * (dalpha - inner)
            grads["att_ws"] += np.einsum("bth,bt->h", u, de)
            du_pre = (de[:, :, None] * p["att_ws"][None, None, :]) \
                * (1.0 - u * u)
            grads["att_Wc"][:h] += np.einsum("bti,btj->ij", H_use, du_pre)
            grads["att_Wc"][h:] += np.einsum("bi,bj->ij", hd_use,
                                             du_pre.sum(axis=1))
            dH_use += du_pre @ Wc1.T
            dhd_use = dhd_use + du_pre.sum(axis=1) @ Wc2.T

            # through decoder output dropout, then the LSTM cell
            if cache["dec_rnn_mask"] is not None:
                dhd = dhd_use * cache["dec_rnn_mask"][:, t]
            else:
                dhd = dhd_use
            dh_total = dh_carry + dhd
            dc_total = dc_carry
            dx, dh_prev, dc_prev = self._lstm_backward(
                m * dh_total, m * dc_total, dc_t["cell"], "dec", grads)
            dh_carry = (1.0 - m) * dh_total + dh_prev
            dc_carry = (1.0 - m) * dc_total + dc_prev
            if cache["dec_emb_mask"] is not None:
                dx = dx * cache["dec_emb_mask"][:, t]
            np.add.at(grads["emb"], batch["tin"][:, t], dx)

        # encoder: attention gradients flow through its output dropout,
        # decoder-init gradients through the undropped final state
        dH = dH_use if cache["enc_rnn_mask"] is None \
            else dH_use * cache["enc_rnn_mask"]
        for t in reversed(range(Tc)):
            m = ctx_mask[:, t:t + 1]
            dh_total = dh_carry + dH[:, t]
            dc_total = dc_carry
            dx, dh_prev, dc_prev = self._lstm_backward(
                m * dh_total, m * dc_total, cache["enc_caches"][t],
                "enc", grads)
            dh_carry = (1.0 - m) * dh_total + dh_prev
            dc_carry = (1.0 - m) * dc_total + dc_prev
            if cache["enc_emb_mask"] is not None:
                dx = dx * cache["enc_emb_mask"][:, t]
            np.add.at(grads["emb"], batch["ctx"][:, t], dx)
        return grads

    # ------------------------------------------------------------------
    # single-example operations

    def encode(self, context_ids) -> EncoderState:
        """Deterministic (eval-mode) encoding of one id sequence."""
        ids = np.asarray(context_ids, dtype=np.int64)
        if ids.size == 0:
            raise ValueError("context must be non-empty")
        batchified = {
            "ctx": ids[None, :],
            "ctx_mask": np.ones((1, ids.size)),
        }
        p = self.params
        X = p["emb"][batchified["ctx"]]
        h_t = np.zeros((1, self.h))
        c_t = np.zeros((1, self.h))
        H = np.zeros((1, ids.size, self.h))
        for t in range(ids.size):
            h_t, c_t, _ = self._lstm_forward(X[:, t], h_t, c_t, "enc")
            H[:, t] = h_t
        return EncoderState(hidden=H[0], context=H[0, -1].copy(),
                            cell=c_t[0].copy())

    def attend(self, enc: EncoderState, h_dec: np.ndarray):
        """Attention weights over the encoder sequence and their context."""
        p = self.params
        H = enc.hidden[None, :, :]
        u = np.tanh(H @ p["att_Wc"][:self.h]
                    + (h_dec[None, :] @ p["att_Wc"][self.h:])[:, None, :])
        e = u @ p["att_ws"]
        alpha = _masked_softmax(e, np.ones_like(e), axis=1)
        ctxv = np.einsum("bt,bth->bh", alpha, H)
        return alpha[0], ctxv[0]

    def decode_step(self, input_id: int, state, enc: EncoderState,
                    emb_q: np.ndarray, kg_sim: np.ndarray,
                    kg_mask: np.ndarray, s_prev: float):
        """One eval-mode decoding step; returns (DecodeStepOutput, state).

        ``state`` is the (h, c) pair, initially
        ``(enc.context, enc.cell)``; the first ``input_id`` is SOS.
        """
        p = self.params
        h_prev, c_prev = state
        x = p["emb"][np.asarray([input_id])]
        hd, cd, _ = self._lstm_forward(x, h_prev[None, :], c_prev[None, :],
                                       "dec")
        alpha, ctxv = self.attend(enc, hd[0])
        cat = np.concatenate([hd[0], ctxv[0] if ctxv.ndim > 1 else ctxv])
        o = cat @ p["out_W"] + p["out_b"]

        d, K = self.d, self.k_max
        zq = emb_q + x[0]
        a = float(zq @ p["gate_w"][:d] + kg_sim @ p["gate_w"][d:d + K]
                  + s_prev * p["gate_w"][d + K] + p["gate_b"])
        s = float(_sigmoid(np.asarray([a]))[0])

        mixed = mixed_distribution(o, kg_sim, kg_mask, s)
        kg_scores = np.where(kg_mask > 0, kg_sim, -np.inf)
        raw = None
        if self.raw_mixture:
            has = float(kg_mask.sum() > 0)
            raw = np.concatenate(
                [(1.0 - s * has) * o, np.where(kg_mask > 0, s * kg_sim,
                                               -np.inf)])
        out = DecodeStepOutput(vocab_logits=o, kg_scores=kg_scores,
                               gate=s, mixed=mixed, raw_scores=raw)
        return out, (hd[0], cd[0])

    def greedy_decode(self, context_ids, emb_q, kg_sim, kg_mask,
                      copy_input_ids, max_len: int = 40,
                      keep_states: bool = False) -> GreedyResult:
        """Argmax decoding until EOS or ``max_len``.

        ``copy_input_ids[j]`` is the vocabulary id fed back after
        emitting copy(j) (first token of the object label).
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        enc = self.encode(context_ids)
        state = (enc.context, enc.cell)
        result = GreedyResult(ext_ids=[], gates=[])
        inp = SOS_ID
        s_prev = 0.0
        for _ in range(max_len):
            out, state = self.decode_step(inp, state, enc, emb_q, kg_sim,
                                          kg_mask, s_prev)
            scores = out.raw_scores if self.raw_mixture else out.mixed
            pick = int(np.argmax(scores))
            s_prev = out.gate
            if keep_states:
                result.states.append(state)
            if pick == EOS_ID:
                break
            result.ext_ids.append(pick)
            result.gates.append(out.gate)
            inp = int(copy_input_ids[pick - self.v]) if pick >= self.v else pick
        return result


def sequence_loss(step_outputs, target_ids, sentient_labels):
    """Reference loss over materialized step outputs (reporting path).

    Computes ``-log mixed[target]`` with the 1e-12 floor plus the gate
    binary cross-entropy, averaged over steps. Used to cross-check the
    batched logit-space loss; PAD positions must already be absent.
    """
    if not (len(step_outputs) == len(target_ids) == len(sentient_labels)):
        raise ValueError("misaligned loss inputs")
    ce = bce = 0.0
    for out, tgt, y in zip(step_outputs, target_ids, sentient_labels):
        ce -= np.log(max(out.mixed[tgt], PROB_FLOOR))
        s = min(max(out.gate, PROB_FLOOR), 1.0 - PROB_FLOOR)
        bce -= y * np.log(s) + (1.0 - y) * np.log(1.0 - s)
    n = max(len(step_outputs), 1)
    l_vocab, l_sent = ce / n, bce / n
    return l_vocab + l_sent, l_vocab, l_sent


def save_checkpoint(path, model: KGCopyModel, vocab: Vocabulary,
                    static_table: np.ndarray, unk_vector: np.ndarray,
                    config: dict, metrics: dict | None = None):
    """Self-describing npz: weights, dims, vocabulary, gate query table."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "dims": {"v": model.v, "d_emb": model.d, "h_dim": model.h,
                 "k_max": model.k_max},
        "dropout_rnn": model.dropout_rnn,
        "dropout_emb": model.dropout_emb,
        "raw_mixture": model.raw_mixture,
        "vocab_hash": vocab.hash(),
        "config": config,
        "metrics": metrics or {},
    }
    arrays = {f"param_{k}": a for k, a in model.params.items()}
    arrays["static_table"] = static_table
    arrays["unk_vector"] = unk_vector
    np.savez(path, __meta__=json.dumps(meta),
             vocab_tokens=np.asarray(vocab.tokens, dtype=object), **arrays)


def load_checkpoint(path):
    """Returns (model, vocab, static_table, unk_vector, meta)."""
    with np.load(path, allow_pickle=True) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format: "
                             f"{meta.get('format')!r}")
        vocab = Vocabulary([str(t) for t in data["vocab_tokens"]])
        dims = meta["dims"]
        model = KGCopyModel(
            v=dims["v"], d_emb=dims["d_emb"], h_dim=dims["h_dim"],
            k_max=dims["k_max"], dropout_rnn=meta["dropout_rnn"],
            dropout_emb=meta["dropout_emb"],
            raw_mixture=meta.get("raw_mixture", False))
        for key in list(model.params):
            model.params[key] = data[f"param_{key}"].copy()
        static_table = data["static_table"].copy()
        unk_vector = data["unk_vector"].copy()
    if vocab.hash() != meta["vocab_hash"]:
        raise ValueError("checkpoint vocabulary hash mismatch")
    return model, vocab, static_table, unk_vector, meta
