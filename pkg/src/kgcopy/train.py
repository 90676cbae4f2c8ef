"""Training loop: two-group Adam, teacher forcing, checkpoint selection.

The encoder parameter group (embeddings and encoder LSTM) trains at a
lower rate than everything downstream; both groups share one Adam state
keyed by parameter name. Batches are length-bucketed by context length
to keep padding small, then order-shuffled per epoch from a seeded RNG
so runs are reproducible end to end.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .corpus import (
    DEFAULT_LINK_THRESHOLD, DEFAULT_WINDOW, MAX_CONTEXT_LEN, MAX_TARGET_LEN,
    TrainingExample, Vocabulary,
)
from .model import KGCopyModel, gate_similarity, save_checkpoint

__all__ = ["TrainConfig", "Batch", "make_batches", "Adam", "Trainer",
           "TrainingDiverged", "clip_gradients", "parse_config_file"]

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter turns non-finite."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    lr_encoder: float = 1e-3
    lr_decoder: float = 5e-3
    h_dim: int = 64
    d_emb: int = 300
    k_max: int = 256
    dropout_rnn: float = 0.3
    dropout_emb: float = 0.4
    grad_clip_norm: float = 5.0
    seed: int = 13
    window: int = DEFAULT_WINDOW
    min_count: int = 1
    link_threshold: float = DEFAULT_LINK_THRESHOLD
    max_context_len: int = MAX_CONTEXT_LEN
    max_target_len: int = MAX_TARGET_LEN
    selection_metric: str = "entity_f1"   # or "bleu"
    raw_mixture: bool = False
    track_accuracy: bool = False
    patience: int = 0                     # 0 disables early stopping
    max_decode_len: int = MAX_TARGET_LEN

    def validate(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.selection_metric not in ("entity_f1", "bleu"):
            raise ValueError(
                f"selection_metric must be entity_f1 or bleu, "
                f"got {self.selection_metric!r}")
        for name in ("lr_encoder", "lr_decoder"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.dropout_rnn < 1 and 0 <= self.dropout_emb < 1):
            raise ValueError("dropout rates must be in [0, 1)")
        return self


_BOOL_KEYS = {"raw_mixture", "track_accuracy"}
_INT_KEYS = {"batch_size", "epochs", "h_dim", "d_emb", "k_max", "seed",
             "window", "min_count", "max_context_len", "max_target_len",
             "patience", "max_decode_len"}
_FLOAT_KEYS = {"lr_encoder", "lr_decoder", "dropout_rnn", "dropout_emb",
               "grad_clip_norm", "link_threshold"}


def parse_config_file(path, base: TrainConfig | None = None) -> TrainConfig:
    """key=value lines; '#' comments and blank lines ignored."""
    cfg = base or TrainConfig()
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in TrainConfig.__dataclass_fields__:
            raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
        if key in _BOOL_KEYS:
            if val.lower() not in ("true", "false", "1", "0"):
                raise ValueError(f"{path}:{lineno}: bad boolean {val!r}")
            overrides[key] = val.lower() in ("true", "1")
        elif key in _INT_KEYS:
            overrides[key] = int(val)
        elif key in _FLOAT_KEYS:
            overrides[key] = float(val)
        else:
            overrides[key] = val
    return replace(cfg, **overrides).validate()


@dataclass
class Batch:
    ctx: np.ndarray        # (B, Tc) int64
    ctx_mask: np.ndarray   # (B, Tc)
    tin: np.ndarray        # (B, Tt) int64
    tout: np.ndarray       # (B, Tt) int64, extended-space targets
    tmask: np.ndarray      # (B, Tt)
    slab: np.ndarray       # (B, Tt) sentient labels
    emb_q: np.ndarray      # (B, d)
    kg_sim: np.ndarray     # (B, k_max)
    kg_mask: np.ndarray    # (B, k_max)
    examples: list = field(default_factory=list)

    def arrays(self) -> dict:
        return {"ctx": self.ctx, "ctx_mask": self.ctx_mask,
                "tin": self.tin, "tout": self.tout, "tmask": self.tmask,
                "slab": self.slab, "emb_q": self.emb_q,
                "kg_sim": self.kg_sim, "kg_mask": self.kg_mask}

    @property
    def size(self) -> int:
        return self.ctx.shape[0]


def _pad(rows, fill, dtype):
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), fill, dtype=dtype)
    mask = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
    return out, mask


def make_batches(examples: list[TrainingExample], gate_inputs: dict,
                 batch_size: int, k_max: int, rng=None,
                 bucket: bool = True) -> list[Batch]:
    """Group examples into padded batches.

    ``gate_inputs`` carries per-example arrays aligned with
    ``examples``: ``emb_q`` (n, d), ``kg_sim`` and ``kg_mask`` (n,
    k_max); the similarity rows differ per example because the query
    embedding does. Bucketing sorts by context length before slicing so
    that pad waste stays low; the batch order (not membership) is then
    reshuffled by ``rng``.
    """
    if not examples:
        return []
    emb_q_all = gate_inputs["emb_q"]
    kg_sim_all = gate_inputs["kg_sim"]
    kg_mask_all = gate_inputs["kg_mask"]
    if kg_sim_all.shape[1] != k_max:
        raise ValueError(
            f"gate inputs built for k_max={kg_sim_all.shape[1]}, "
            f"batching wants {k_max}")
    order = np.arange(len(examples))
    if bucket:
        lengths = np.asarray([len(examples[i].context_ids) for i in order])
        order = order[np.argsort(lengths, kind="stable")]
    elif rng is not None:
        order = rng.permutation(order)

    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        exs = [examples[i] for i in idx]
        ctx, ctx_mask = _pad([e.context_ids for e in exs], 0, np.int64)
        tin, _ = _pad([e.input_ids for e in exs], 0, np.int64)
        tout, tmask = _pad([e.target_ids for e in exs], 0, np.int64)
        slab, _ = _pad([e.sentient_labels for e in exs], 0, np.float64)
        batches.append(Batch(
            ctx=ctx, ctx_mask=ctx_mask, tin=tin, tout=tout, tmask=tmask,
            slab=slab.astype(np.float64),
            emb_q=emb_q_all[idx],
            kg_sim=kg_sim_all[idx], kg_mask=kg_mask_all[idx],
            examples=exs))
    if rng is not None and len(batches) > 1:
        perm = rng.permutation(len(batches))
        batches = [batches[i] for i in perm]
    return batches


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Global-norm clip in place; returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Standard Adam with per-parameter-group learning rates."""

    def __init__(self, params: dict, lr_by_name, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.lr_by_name = lr_by_name   # callable name -> lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(a) for k, a in params.items()}
        self.v = {k: np.zeros_like(a) for k, a in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            params[name] -= self.lr_by_name(name) * m_hat \
                / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    loss_vocab: float
    loss_sentient: float
    valid_bleu: float
    valid_entity_f1: float
    token_acc: float | None = None
    sentient_acc: float | None = None


class Trainer:
    """Drives epochs and tracks the best validation checkpoint.

    The validation callback is injected (it needs decoding plus metric
    computation, which live above this module); it must return a dict
    with ``bleu`` and ``entity_f1``.
    """

    def __init__(self, model: KGCopyModel, config: TrainConfig,
                 validate_fn=None, checkpoint_path=None,
                 checkpoint_extras=None):
        config.validate()
        self.model = model
        self.config = config
        self.validate_fn = validate_fn
        self.checkpoint_path = checkpoint_path
        self.checkpoint_extras = checkpoint_extras or {}
        enc = set(KGCopyModel.ENCODER_GROUP)
        self.optimizer = Adam(
            model.params,
            lr_by_name=lambda n: config.lr_encoder if n in enc
            else config.lr_decoder)
        self.history: list[EpochStats] = []
        self.batch_losses: list[tuple[float, float, float]] = []
        self.best_metric = (-np.inf, -np.inf)
        self.best_epoch = -1

    def run_epoch(self, batches, epoch: int, rng) -> tuple[float, float, float]:
        model, cfg = self.model, self.config
        tot = tot_v = tot_s = 0.0
        weight = 0.0
        for bi, batch in enumerate(batches):
            L_tot, L_vocab, L_sent, cache = model.forward_batch(
                batch.arrays(), train=True, rng=rng)
            if not np.isfinite(L_tot):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {bi}: "
                    f"vocab={L_vocab} sentient={L_sent}")
            grads = model.backward_batch(cache)
            clip_gradients(grads, cfg.grad_clip_norm)
            self.optimizer.step(model.params, grads)
            for name, arr in model.params.items():
                if not np.all(np.isfinite(arr)):
                    raise TrainingDiverged(
                        f"non-finite parameter {name} after epoch {epoch} "
                        f"batch {bi}")
            n = cache["n_steps"]
            tot += L_tot * n
            tot_v += L_vocab * n
            tot_s += L_sent * n
            weight += n
            self.batch_losses.append((L_tot, L_vocab, L_sent))
        weight = max(weight, 1.0)
        return tot / weight, tot_v / weight, tot_s / weight

    def train(self, train_batches_fn, metrics_csv=None) -> list[EpochStats]:
        """``train_batches_fn(rng)`` builds this epoch's batch list."""
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        writer = csv_file = None
        if metrics_csv is not None:
            csv_file = open(metrics_csv, "w", newline="")
            writer = csv.writer(csv_file)
            writer.writerow(["epoch", "train_loss", "loss_vocab",
                             "loss_sentient", "valid_bleu",
                             "valid_entity_f1"])
        stale = 0
        try:
            for epoch in range(cfg.epochs):
                batches = train_batches_fn(rng)
                loss, lv, ls = self.run_epoch(batches, epoch, rng)
                scores = {"bleu": 0.0, "entity_f1": 0.0}
                if self.validate_fn is not None:
                    scores = self.validate_fn(self.model)
                stats = EpochStats(
                    epoch=epoch, train_loss=loss, loss_vocab=lv,
                    loss_sentient=ls, valid_bleu=scores["bleu"],
                    valid_entity_f1=scores["entity_f1"])
                if cfg.track_accuracy:
                    accs = self._eval_accuracy(batches)
                    stats.token_acc, stats.sentient_acc = accs
                self.history.append(stats)
                if writer:
                    writer.writerow([epoch, f"{loss:.6f}", f"{lv:.6f}",
                                     f"{ls:.6f}", f"{scores['bleu']:.4f}",
                                     f"{scores['entity_f1']:.4f}"])
                    csv_file.flush()
                log.info(
                    "epoch %d loss=%.4f (vocab=%.4f sentient=%.4f) "
                    "bleu=%.2f entity_f1=%.2f", epoch, loss, lv, ls,
                    scores["bleu"], scores["entity_f1"])
                # primary selection metric, the other breaks ties so a
                # saturating one does not freeze the checkpoint early
                other = "bleu" if cfg.selection_metric == "entity_f1" \
                    else "entity_f1"
                metric = (scores[cfg.selection_metric], scores[other])
                if self.validate_fn is not None and metric > self.best_metric:
                    self.best_metric = metric
                    self.best_epoch = epoch
                    stale = 0
                    self._save_best(scores)
                else:
                    stale += 1
                if cfg.patience and stale >= cfg.patience:
                    log.info("early stop at epoch %d (patience %d)",
                             epoch, cfg.patience)
                    break
        finally:
            if csv_file:
                csv_file.close()
        return self.history

    def _eval_accuracy(self, batches):
        tok = sent = steps = 0.0
        for batch in batches:
            _, _, _, cache = self.model.forward_batch(
                batch.arrays(), train=False, compute_acc=True)
            a_tok, a_sent = cache["acc"]
            n = cache["n_steps"]
            tok += a_tok * n
            sent += a_sent * n
            steps += n
        steps = max(steps, 1.0)
        return tok / steps, sent / steps

    def _save_best(self, scores):
        if self.checkpoint_path is None:
            return
        extras = self.checkpoint_extras
        save_checkpoint(
            self.checkpoint_path, self.model, extras["vocab"],
            extras["static_table"], extras["unk_vector"],
            config=asdict(self.config),
            metrics={"epoch": self.best_epoch, **scores})
        log.info("saved checkpoint (epoch %d, %s=%.3f)", self.best_epoch,
                 self.config.selection_metric, self.best_metric[0])
