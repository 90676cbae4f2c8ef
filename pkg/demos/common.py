"""Shared plumbing for the demo scripts: one small trained checkpoint.

The first demo that needs a model trains it into ``demo-output/`` at the
repository root; later demos (and re-runs) reuse it. Delete the
directory to retrain from scratch.
"""

from pathlib import Path

from kgcopy.cli import run_training
from kgcopy.synthetic import write_corpus
from kgcopy.train import TrainConfig

ROOT = Path(__file__).resolve().parent.parent / "demo-output"
CORPUS = ROOT / "corpus"
RUN = ROOT / "run"
CHECKPOINT = RUN / "model.npz"

TRAIN_CONFIG = TrainConfig(
    batch_size=32, epochs=50, h_dim=64, d_emb=48, k_max=8,
    dropout_rnn=0.1, dropout_emb=0.1, seed=11, min_count=1,
    selection_metric="bleu")


def ensure_corpus() -> Path:
    """Write the synthetic league corpus once; idempotent."""
    if not (CORPUS / "train.jsonl").is_file():
        print(f"writing synthetic corpus -> {CORPUS}")
        write_corpus(CORPUS)
    return CORPUS


def ensure_checkpoint() -> Path:
    """Train the demo model once (about half a minute); idempotent."""
    ensure_corpus()
    if not CHECKPOINT.is_file():
        print(f"training demo model -> {RUN} (about 30 seconds)")
        run_training(CORPUS, CORPUS / "kg", RUN, TRAIN_CONFIG)
        print()
    return CHECKPOINT
