"""Knowledge-grounded chit-chat with a copy gate.

An encoder-decoder dialogue model that, at each decoding step, mixes a
distribution over its training vocabulary with a copy distribution over
a small per-conversation knowledge graph, steered by a learned gate.
Includes the data pipeline (answer-to-triple linking), a pure-numpy
training loop, BLEU / entity-F1 evaluation, and chat serving over HTTP.
"""

from .corpus import (
    CorpusError, Dialogue, TrainingExample, Turn, Vocabulary,
    build_vocabulary, encode_context, link_answers, load_dialogues,
)
from .kg import (
    EmptyKGError, KGError, KGParseError, LocalKG, Triple, K_MAX,
    embed_triples, load_kg_dir, load_team_kg, resolve_object,
)
from .metrics import EvalReport, bleu, entity_f1, evaluate_split
from .model import (
    DecodeStepOutput, EncoderState, GreedyResult, KGCopyModel,
    gate_similarity, load_checkpoint, mixed_distribution, save_checkpoint,
    sequence_loss,
)
from .pipeline import build_examples, build_gate_inputs, decode_example
from .serve import ChatEngine, make_server, render_spans
from .synthetic import SyntheticSpec, generate as generate_synthetic
from .text import content_tokens, normalize, pos_tag, tokenize
from .train import Adam, Batch, TrainConfig, Trainer, make_batches
from .vectors import (
    EmbeddingTable, content_word_average, load_pretrained, random_table,
)

__version__ = "0.1.0"

__all__ = [
    "Adam", "Batch", "ChatEngine", "CorpusError", "DecodeStepOutput",
    "Dialogue", "EmbeddingTable", "EmptyKGError", "EncoderState",
    "EvalReport", "GreedyResult", "KGCopyModel", "KGError", "KGParseError",
    "K_MAX", "LocalKG", "SyntheticSpec", "TrainConfig", "Trainer",
    "TrainingExample", "Triple", "Turn", "Vocabulary", "bleu",
    "build_examples", "build_gate_inputs", "build_vocabulary",
    "content_tokens", "content_word_average", "decode_example",
    "embed_triples", "encode_context", "entity_f1", "evaluate_split",
    "gate_similarity", "generate_synthetic", "link_answers",
    "load_checkpoint", "load_dialogues", "load_kg_dir", "load_pretrained",
    "load_team_kg", "make_batches", "make_server", "mixed_distribution",
    "normalize", "pos_tag", "random_table", "render_spans",
    "resolve_object", "save_checkpoint", "sequence_loss", "tokenize",
    "__version__",
]
