"""Conversation ingestion, vocabulary, and copy-target linking.

Conversations arrive as JSON Lines, one dialogue per line::

    {"id": "d1", "team": "arsenal", "turns": [
        {"speaker": "user", "text": "who is the captain?"},
        {"speaker": "system", "text": "laurent koscielny."}]}

``link_answers`` turns each system utterance into a training example:
the context is the preceding turns, and any span of the target that
matches an object label of the team's KG is collapsed into a single
copy token addressing that triple position. Sentient labels mark
exactly those copy positions.

The vocabulary is built from the training split only. Reserved ids are
fixed: PAD=0, UNK=1, SOS=2, EOS=3, plus the speaker-boundary token
SEP=4 used when concatenating context turns.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .kg import LocalKG
from .text import normalize, tokenize

__all__ = [
    "Turn",
    "Dialogue",
    "Vocabulary",
    "TrainingExample",
    "LinkRecord",
    "CorpusError",
    "load_dialogues",
    "build_vocabulary",
    "link_answers",
    "encode_context",
    "write_audit",
]

MAX_CONTEXT_LEN = 80
MAX_TARGET_LEN = 40
DEFAULT_WINDOW = 3
DEFAULT_LINK_THRESHOLD = 0.8


class CorpusError(ValueError):
    """A conversations file violated the expected schema."""


class Turn(NamedTuple):
    speaker: str  # "user" | "system"
    text: str


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    team_id: str
    turns: tuple[Turn, ...]
    split: str | None = None


class Vocabulary:
    """token <-> id map with fixed reserved ids."""

    PAD = "<pad>"
    UNK = "<unk>"
    SOS = "<sos>"
    EOS = "<eos>"
    SEP = "<sep>"
    RESERVED = (PAD, UNK, SOS, EOS, SEP)
    PAD_ID, UNK_ID, SOS_ID, EOS_ID, SEP_ID = range(5)

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(self.RESERVED)]) != self.RESERVED:
            tokens = list(self.RESERVED) + [
                t for t in tokens if t not in self.RESERVED]
        self.tokens = tokens
        self.index = {tok: i for i, tok in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise CorpusError("duplicate tokens in vocabulary")

    @property
    def v(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, self.UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.tokens).encode("utf-8"))
        return digest.hexdigest()

    def to_json(self) -> str:
        return json.dumps({"tokens": self.tokens})

    @classmethod
    def from_json(cls, payload: str) -> "Vocabulary":
        return cls(json.loads(payload)["tokens"])


class LinkRecord(NamedTuple):
    """One answer-to-triple link, for the human-audit file."""
    dialogue_id: str
    turn_index: int
    span: str
    triple_position: int
    score: float


@dataclass
class TrainingExample:
    """One system turn, linked and id-encoded.

    ``target_ids`` live in the extended space [0, v) for vocabulary
    tokens and v + j for a copy of triple j; ``input_ids`` are the
    teacher-forcing decoder inputs (SOS followed by the target shifted
    right, with copy tokens replaced by the first token of their object
    label). ``sentient_labels[t]`` is 1 exactly where ``target_ids[t]``
    is a copy token.
    """

    dialogue_id: str
    team_id: str
    turn_index: int
    context_ids: list[int]
    target_ids: list[int]
    input_ids: list[int]
    sentient_labels: list[int]
    reference_text: str
    query_tokens: list[str]
    links: list[LinkRecord] = field(default_factory=list)


def load_dialogues(path: str | os.PathLike) -> list[Dialogue]:
    """Read a JSON Lines conversations file.

    The split name is taken from the file stem (train/valid/test
    directory layouts collapse to file names here). Schema violations
    raise :class:`CorpusError` naming the dialogue.
    """
    split = os.path.splitext(os.path.basename(path))[0]
    dialogues: list[Dialogue] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON") from exc
            did = str(record.get("id", f"line{lineno}"))
            team = str(record.get("team", "none"))
            raw_turns = record.get("turns")
            if not isinstance(raw_turns, list) or not raw_turns:
                raise CorpusError(f"dialogue {did}: missing turns")
            turns = []
            for idx, t in enumerate(raw_turns):
                speaker = t.get("speaker")
                text = t.get("text", "")
                if speaker not in ("user", "system"):
                    raise CorpusError(
                        f"dialogue {did}: turn {idx} has speaker {speaker!r}")
                if not normalize(text):
                    raise CorpusError(f"dialogue {did}: turn {idx} is empty")
                expected = "user" if idx % 2 == 0 else "system"
                if speaker != expected:
                    raise CorpusError(
                        f"dialogue {did}: turn {idx} should be {expected}, "
                        f"got {speaker}")
                turns.append(Turn(speaker, text))
            dialogues.append(Dialogue(did, team, tuple(turns), split=split))
    return dialogues


def build_vocabulary(train: Sequence[Dialogue], min_count: int = 1) -> Vocabulary:
    """Count tokens over the training split and keep those with
    count >= ``min_count``. Ties at equal count break lexicographically,
    so two builds over the same split are identical."""
    if not train:
        raise CorpusError("cannot build a vocabulary from an empty split")
    counts: Counter[str] = Counter()
    for d in train:
        for turn in d.turns:
            counts.update(tokenize(turn.text))
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t))
    return Vocabulary(list(Vocabulary.RESERVED) + kept)


def encode_context(
    turns: Sequence[Turn],
    vocab: Vocabulary,
    window: int = DEFAULT_WINDOW,
    max_len: int = MAX_CONTEXT_LEN,
) -> list[int]:
    """Encode the last ``window`` turns, SEP-separated, tail-truncated."""
    if window < 1:
        raise ValueError("window must be >= 1")
    ids: list[int] = []
    for i, turn in enumerate(turns[-window:]):
        if i > 0:
            ids.append(vocab.SEP_ID)
        ids.extend(vocab.encode(tokenize(turn.text)))
    return ids[-max_len:]


def _entity_token_map(kg: LocalKG) -> dict[tuple[str, ...], str]:
    """Tokenized object label -> normalized label key."""
    return {tuple(tokenize(label)): label for label in kg.object_index}


def _pick_position(kg: LocalKG, label: str, question_tokens: Sequence[str]) -> int:
    """Disambiguate an object appearing in several triples.

    Highest subject+relation token overlap with the user question wins;
    remaining ties go to the lowest position.
    """
    positions = kg.object_index[label]
    if len(positions) == 1:
        return positions[0]
    qset = set(question_tokens)
    best_pos, best_overlap = positions[0], -1
    for pos in positions:
        t = kg.triples[pos]
        overlap = len(set(tokenize(t.subject) + tokenize(t.relation)) & qset)
        if overlap > best_overlap:
            best_pos, best_overlap = pos, overlap
    return best_pos


def _jaccard(a: Sequence[str], b: Sequence[str]) -> float:
    sa, sb = set(a), set(b)
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def _match_spans(
    tokens: Sequence[str],
    kg: LocalKG,
    question_tokens: Sequence[str],
    threshold: float,
) -> list[tuple[int, int, int, str, float]]:
    """Greedy longest-first scan for KG object spans.

    Returns (start, length, triple_position, span_text, score) per match,
    non-overlapping, left to right. Exact normalized matches score 1.0;
    otherwise the best token-Jaccard >= ``threshold`` wins.
    """
    entity_map = _entity_token_map(kg)
    if not entity_map:
        return []
    max_span = max(len(k) for k in entity_map)
    matches = []
    i = 0
    while i < len(tokens):
        found = None
        # exact pass, longest span first
        for length in range(min(max_span, len(tokens) - i), 0, -1):
            span = tuple(tokens[i:i + length])
            if span in entity_map:
                found = (length, entity_map[span], 1.0)
                break
        if found is None:
            # fuzzy pass: best token-Jaccard at or above the threshold;
            # strict improvement keeps ties deterministic (triple order)
            for length in range(min(max_span, len(tokens) - i), 0, -1):
                span = tuple(tokens[i:i + length])
                best_label, best_score = None, 0.0
                for ent_tokens, label in entity_map.items():
                    score = _jaccard(span, ent_tokens)
                    if score > best_score:
                        best_label, best_score = label, score
                if best_label is not None and best_score >= threshold:
                    found = (length, best_label, best_score)
                    break
        if found:
            length, label, score = found
            pos = _pick_position(kg, label, question_tokens)
            matches.append((i, length, pos, " ".join(tokens[i:i + length]), score))
            i += length
        else:
            i += 1
    return matches


def link_answers(
    dialogue: Dialogue,
    kg: LocalKG,
    vocab: Vocabulary,
    window: int = DEFAULT_WINDOW,
    threshold: float = DEFAULT_LINK_THRESHOLD,
    max_context_len: int = MAX_CONTEXT_LEN,
    max_target_len: int = MAX_TARGET_LEN,
) -> list[TrainingExample]:
    """Produce one linked example per system turn of ``dialogue``.

    A system turn with no KG match passes through with all-zero labels.
    Pass ``LocalKG.empty(team)`` for dialogues without a KG.
    """
    examples = []
    for idx, turn in enumerate(dialogue.turns):
        if turn.speaker != "system":
            continue
        context = dialogue.turns[:idx]
        window_turns = context[-window:]
        query = next(
            (t for t in reversed(window_turns) if t.speaker == "user"), None)
        query_tokens = (tokenize(query.text) if query else
                        [tok for t in window_turns for tok in tokenize(t.text)])

        target_tokens = tokenize(turn.text)[: max_target_len - 1]
        matches = _match_spans(target_tokens, kg, query_tokens, threshold)

        target_ids: list[int] = []
        input_tokens: list[str] = []
        labels: list[int] = []
        links: list[LinkRecord] = []
        cursor = 0
        for start, length, pos, span_text, score in matches:
            for tok in target_tokens[cursor:start]:
                target_ids.append(vocab.id_of(tok))
                input_tokens.append(tok)
                labels.append(0)
            target_ids.append(vocab.v + pos)
            object_tokens = tokenize(kg.triples[pos].object)
            input_tokens.append(object_tokens[0] if object_tokens else Vocabulary.UNK)
            labels.append(1)
            links.append(LinkRecord(dialogue.dialogue_id, idx, span_text, pos, score))
            cursor = start + length
        for tok in target_tokens[cursor:]:
            target_ids.append(vocab.id_of(tok))
            input_tokens.append(tok)
            labels.append(0)

        target_ids.append(vocab.EOS_ID)
        labels.append(0)
        input_ids = [vocab.SOS_ID] + vocab.encode(input_tokens)

        examples.append(TrainingExample(
            dialogue_id=dialogue.dialogue_id,
            team_id=dialogue.team_id,
            turn_index=idx,
            context_ids=encode_context(context, vocab, window, max_context_len),
            target_ids=target_ids,
            input_ids=input_ids,
            sentient_labels=labels,
            reference_text=turn.text,
            query_tokens=query_tokens,
            links=links,
        ))
    return examples


def write_audit(path: str | os.PathLike, examples: Iterable[TrainingExample]) -> int:
    """Write every link as TSV for human review; returns the row count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dialogue_id\tturn_index\tspan\ttriple_position\tscore\n")
        for ex in examples:
            for rec in ex.links:
                fh.write(f"{rec.dialogue_id}\t{rec.turn_index}\t{rec.span}"
                         f"\t{rec.triple_position}\t{rec.score:.3f}\n")
                n += 1
    return n
