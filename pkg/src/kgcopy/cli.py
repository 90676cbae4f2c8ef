"""Command line entry points: preprocess, train, evaluate, chat, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .corpus import CorpusError, build_vocabulary, load_dialogues, write_audit
from .kg import KGError, load_kg_dir
from .metrics import evaluate_split
from .model import KGCopyModel, load_checkpoint
from .pipeline import build_examples, build_gate_inputs
from .serve import ChatEngine, run_server
from .train import TrainConfig, Trainer, make_batches, parse_config_file
from .vectors import (
    VectorFormatError, load_pretrained, random_table, table_from_array,
)

log = logging.getLogger(__name__)


class CliError(RuntimeError):
    """User-facing failure; message printed without a traceback."""


def _load_split(data_dir: Path, split: str, required: bool = True):
    path = data_dir / f"{split}.jsonl"
    if not path.is_file():
        if required:
            raise CliError(f"missing data file: {path}")
        return []
    return load_dialogues(path)


def _example_config(cfg: TrainConfig) -> dict:
    return dict(window=cfg.window, threshold=cfg.link_threshold,
                max_context_len=cfg.max_context_len,
                max_target_len=cfg.max_target_len)


def _config_from_args(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = parse_config_file(args.config, cfg)
    overrides = {}
    for name in ("batch_size", "epochs", "seed", "h_dim", "d_emb", "k_max",
                 "min_count", "window", "patience", "lr_encoder",
                 "lr_decoder", "selection_metric"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides).validate()


def run_preprocess(args) -> int:
    data_dir, out_dir = Path(args.data_dir), Path(args.out)
    cfg = _config_from_args(args)
    kgs = load_kg_dir(args.kg_dir)
    train = _load_split(data_dir, "train")
    vocab = build_vocabulary(train, cfg.min_count)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "vocab.json").write_text(vocab.to_json())

    stats = {"vocab_size": vocab.v, "teams": len(kgs),
             "triples": sum(kg.k for kg in kgs.values()), "splits": {}}
    for split in ("train", "valid", "test"):
        dialogues = train if split == "train" else _load_split(
            data_dir, split, required=False)
        if not dialogues:
            continue
        examples = build_examples(dialogues, kgs, vocab,
                                  **_example_config(cfg))
        n_links = write_audit(out_dir / f"links_{split}.tsv", examples)
        n_copy = sum(any(lbl for lbl in ex.sentient_labels)
                     for ex in examples)
        stats["splits"][split] = {
            "dialogues": len(dialogues),
            "utterances": sum(len(d.turns) for d in dialogues),
            "responses": len(examples),
            "responses_with_copy": n_copy,
            "links": n_links,
        }
        print(f"{split}: {len(dialogues)} dialogues, "
              f"{len(examples)} responses, {n_links} linked spans")
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2))
    print(f"vocabulary: {vocab.v} tokens -> {out_dir / 'vocab.json'}")
    return 0


def _build_table(vocab, cfg: TrainConfig, vectors_path):
    if vectors_path:
        table = load_pretrained(vectors_path, vocab)
        if table.dim != cfg.d_emb:
            log.warning("vector file dim %d overrides configured d_emb %d",
                        table.dim, cfg.d_emb)
            cfg = replace(cfg, d_emb=table.dim)
        return table, cfg
    return random_table(vocab, dim=cfg.d_emb, salt=cfg.seed), cfg


def run_training(data_dir, kg_dir, out_dir, cfg: TrainConfig,
                 vectors_path=None, quiet: bool = False):
    """Full pipeline; returns (trainer, vocab). Used by CLI and tests."""
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_dialogues = _load_split(data_dir, "train")
    valid_dialogues = _load_split(data_dir, "valid", required=False)
    kgs = load_kg_dir(kg_dir)
    oversize = [t for t, kg in kgs.items() if kg.k > cfg.k_max]
    if oversize:
        raise CliError(
            f"KGs exceed k_max={cfg.k_max}: {', '.join(sorted(oversize))}")

    vocab = build_vocabulary(train_dialogues, cfg.min_count)
    table, cfg = _build_table(vocab, cfg, vectors_path)
    static_table = np.stack([table.vector(t) for t in vocab.tokens])

    ex_cfg = _example_config(cfg)
    train_examples = build_examples(train_dialogues, kgs, vocab, **ex_cfg)
    if not train_examples:
        raise CliError("training split produced no examples")
    gate_train = build_gate_inputs(train_examples, kgs, table, cfg.k_max)
    valid_examples = build_examples(valid_dialogues, kgs, vocab, **ex_cfg)

    model = KGCopyModel(
        v=vocab.v, d_emb=cfg.d_emb, h_dim=cfg.h_dim, k_max=cfg.k_max,
        dropout_rnn=cfg.dropout_rnn, dropout_emb=cfg.dropout_emb,
        raw_mixture=cfg.raw_mixture, seed=cfg.seed,
        emb_init=static_table)

    validate_fn = None
    if valid_examples:
        def validate_fn(m):
            report = evaluate_split(
                m, vocab, table, valid_dialogues, valid_examples, kgs,
                split="valid", max_len=cfg.max_decode_len)
            return {"bleu": report.bleu, "entity_f1": report.entity_f1}

    trainer = Trainer(
        model, cfg, validate_fn=validate_fn,
        checkpoint_path=out_dir / "model.npz",
        checkpoint_extras={"vocab": vocab, "static_table": static_table,
                           "unk_vector": table.unk})
    trainer.train(
        lambda rng: make_batches(train_examples, gate_train,
                                 cfg.batch_size, cfg.k_max, rng=rng),
        metrics_csv=out_dir / "metrics.csv")
    if not quiet:
        last = trainer.history[-1]
        print(f"trained {len(trainer.history)} epochs; "
              f"final loss {last.train_loss:.4f}; best "
              f"{cfg.selection_metric} {trainer.best_metric[0]:.2f} "
              f"at epoch {trainer.best_epoch}")
        if trainer.checkpoint_path and trainer.best_epoch >= 0:
            print(f"checkpoint: {trainer.checkpoint_path}")
    return trainer, vocab


def run_train_cmd(args) -> int:
    cfg = _config_from_args(args)
    run_training(args.data_dir, args.kg_dir, args.out, cfg,
                 vectors_path=args.vectors)
    return 0


def _load_engine(checkpoint, kg_dir):
    model, vocab, static_table, unk, meta = load_checkpoint(checkpoint)
    table = table_from_array(vocab.tokens, static_table, unk=unk)
    kgs = load_kg_dir(kg_dir)
    cfg = meta.get("config", {})
    return ChatEngine(
        model, vocab, table, kgs,
        window=int(cfg.get("window", 3)),
        max_decode_len=int(cfg.get("max_decode_len", 40))), meta


def run_evaluate(args) -> int:
    model, vocab, static_table, unk, meta = load_checkpoint(args.checkpoint)
    table = table_from_array(vocab.tokens, static_table, unk=unk)
    kgs = load_kg_dir(args.kg_dir)
    dialogues = _load_split(Path(args.data_dir), args.split)
    cfg_dict = meta.get("config", {})
    examples = build_examples(
        dialogues, kgs, vocab,
        window=int(cfg_dict.get("window", 3)),
        threshold=float(cfg_dict.get("link_threshold", 0.8)),
        max_context_len=int(cfg_dict.get("max_context_len", 80)),
        max_target_len=int(cfg_dict.get("max_target_len", 40)))
    report = evaluate_split(
        model, vocab, table, dialogues, examples, kgs, split=args.split,
        max_len=int(cfg_dict.get("max_decode_len", 40)))
    print(report.format_table())
    if args.json:
        Path(args.json).write_text(report.to_json())
        print(f"wrote {args.json}")
    return 0


def run_chat(args) -> int:
    engine, _ = _load_engine(args.checkpoint, args.kg_dir)
    if args.team not in engine.kgs:
        raise CliError(f"unknown team {args.team!r}; available: "
                       + ", ".join(engine.teams))
    session = engine.new_session(args.team)
    print(f"chatting about {args.team}; empty line or Ctrl-D quits")
    while True:
        try:
            line = input("you> ").strip()
        except (EOFError, KeyboardInterrupt):
            print()
            break
        if not line:
            break
        response = engine.chat_turn(session, line)
        print(f"bot> {response['text']}")
        for span in response["spans"]:
            if span["source"] == "kg":
                s, r, o = span["triple_sro"]
                print(f"     [kg] {response['text'][span['start']:span['end']].strip()!r}"
                      f" <- ({s}, {r}, {o})")
    return 0


def run_serve(args) -> int:
    engine, _ = _load_engine(args.checkpoint, args.kg_dir)
    run_server(engine, host=args.host, port=args.port, ui_dir=args.ui_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgcopy",
        description="Knowledge-grounded chit-chat: data prep, training, "
                    "evaluation, and serving.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common_cfg = argparse.ArgumentParser(add_help=False)
    common_cfg.add_argument("--config", help="key=value config file")
    for name, typ in (("batch-size", int), ("epochs", int), ("seed", int),
                      ("h-dim", int), ("d-emb", int), ("k-max", int),
                      ("min-count", int), ("window", int),
                      ("patience", int), ("lr-encoder", float),
                      ("lr-decoder", float)):
        common_cfg.add_argument(f"--{name}", type=typ, default=None)
    common_cfg.add_argument("--selection-metric",
                            choices=("entity_f1", "bleu"), default=None)

    p = sub.add_parser("preprocess", parents=[common_cfg],
                       help="link answers to KG triples and write audit files")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--kg-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_preprocess)

    p = sub.add_parser("train", parents=[common_cfg],
                       help="train a model and keep the best checkpoint")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--kg-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vectors", help="pretrained word vector file")
    p.set_defaults(func=run_train_cmd)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--kg-dir", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=run_evaluate)

    p = sub.add_parser("chat", help="interactive session in the terminal")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kg-dir", required=True)
    p.add_argument("--team", required=True)
    p.set_defaults(func=run_chat)

    p = sub.add_parser("serve", help="HTTP chat API (and optional UI files)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kg-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui-dir", help="directory of static files to serve")
    p.set_defaults(func=run_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, CorpusError, KGError, VectorFormatError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
