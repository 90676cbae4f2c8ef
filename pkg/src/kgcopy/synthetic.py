"""Seeded synthetic soccer-chat corpus for end-to-end exercises.

Small invented league: a handful of teams, five facts per team
(ground, captain, coach, founding year, jersey color), templated
questions and answers plus a few chit-chat exchanges. The test split
uses question wordings never seen in training, but built only from
words that do occur in the training split, so out-of-vocabulary noise
cannot mask copy behaviour. Every (team, relation) pair is guaranteed
to appear in training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Dialogue, Turn
from .kg import LocalKG, Triple

__all__ = ["SyntheticSpec", "generate", "write_corpus"]

_ADJECTIVES = ["northern", "southern", "eastern", "western", "central",
               "coastal", "highland", "valley"]
_ANIMALS = ["lions", "eagles", "sharks", "wolves", "falcons",
            "bears", "otters", "ravens"]
_CITIES = ["riverton", "lakewood", "hillcrest", "stonebridge", "maplewood",
           "fairview", "ashford", "brookfield"]
_FIRST = ["arlo", "beno", "caspar", "dorian", "emil", "felix", "gustav",
          "henrik", "ivo", "jonas", "karel", "luca", "milan", "nico",
          "oskar", "pavel"]
_LAST = ["maier", "novak", "olsen", "petrov", "quist", "rask", "silva",
         "toure", "ullrich", "vega", "wirtz", "yilmaz", "zeman", "abadi",
         "bakker", "costa"]
_COLORS = ["crimson", "amber", "teal", "violet", "indigo", "scarlet",
           "emerald", "ochre"]

RELATIONS = ["home ground", "captain", "coach", "founded", "jersey color"]

_TRAIN_QUESTIONS = {
    "home ground": ["what is the home ground of {team} ?",
                    "where do {team} play their home games ?",
                    "tell me the home ground of {team} please",
                    "do you know the home ground of {team} ?"],
    "captain": ["who is the captain of {team} ?",
                "can you name the captain of {team} ?",
                "tell me the captain of {team} please",
                "do you know the captain of {team} ?"],
    "coach": ["who is the coach of {team} ?",
              "what do you know about the coach of {team} ?",
              "tell me the coach of {team} please",
              "do you know the coach of {team} ?"],
    "founded": ["when was {team} founded ?",
                "in what year were {team} founded ?",
                "tell me when {team} were founded please",
                "do you know the year {team} were founded ?"],
    "jersey color": ["what color is the jersey of {team} ?",
                     "what jersey color do {team} wear ?",
                     "tell me the jersey color of {team} please",
                     "do you know the jersey color of {team} ?"],
}
# reworded with train-split words only
_TEST_QUESTIONS = {
    "home ground": ["where is the home ground of {team} ?"],
    "captain": ["who is captain for {team} ?"],
    "coach": ["who is the coach for {team} ?"],
    "founded": ["when were {team} founded ?"],
    "jersey color": ["what is the jersey color of {team} ?"],
}
_ANSWERS = {
    "home ground": "their home ground is {obj} .",
    "captain": "the captain is {obj} .",
    "coach": "the team is coached by {obj} .",
    "founded": "they were founded in {obj} .",
    "jersey color": "they wear {obj} .",
}
_CHITCHAT = [
    ("hello !", "hi , how can i help you ?"),
    ("thanks for the help", "you are welcome ."),
    ("do you like football ?", "yes , i love football ."),
    ("bye", "see you later !"),
]


@dataclass
class SyntheticSpec:
    n_teams: int = 5
    n_train: int = 200
    n_valid: int = 40
    n_test: int = 40
    seed: int = 7
    p_greeting: float = 0.5
    p_closing: float = 0.4


def _build_kgs(spec: SyntheticSpec) -> dict[str, LocalKG]:
    if spec.n_teams > len(_ADJECTIVES):
        raise ValueError(f"at most {len(_ADJECTIVES)} teams supported")
    kgs = {}
    for i in range(spec.n_teams):
        team = f"{_ADJECTIVES[i]} {_ANIMALS[i]}"
        objects = {
            "home ground": f"{_CITIES[i]} park",
            "captain": f"{_FIRST[2 * i]} {_LAST[2 * i]}",
            "coach": f"{_FIRST[2 * i + 1]} {_LAST[2 * i + 1]}",
            "founded": str(1890 + 7 * i),
            "jersey color": _COLORS[i],
        }
        triples = [Triple(team, rel, objects[rel]) for rel in RELATIONS]
        team_id = team.replace(" ", "_")
        kgs[team_id] = LocalKG.from_triples(team_id, triples)
    return kgs


def _team_name(team_id: str) -> str:
    return team_id.replace("_", " ")


def _fact_pair(rng, team_id: str, kg: LocalKG, relation: str,
               questions: dict) -> list[Turn]:
    template = questions[relation][rng.integers(len(questions[relation]))]
    triple = next(t for t in kg.triples if t.relation == relation)
    return [
        Turn("user", template.format(team=_team_name(team_id))),
        Turn("system", _ANSWERS[relation].format(obj=triple.object)),
    ]


def _make_dialogue(rng, spec: SyntheticSpec, dlg_id: str, team_id: str,
                   kg: LocalKG, questions: dict,
                   forced_relation: str | None = None,
                   split: str | None = None) -> Dialogue:
    turns: list[Turn] = []
    if rng.random() < spec.p_greeting:
        q, a = _CHITCHAT[rng.integers(len(_CHITCHAT))]
        turns += [Turn("user", q), Turn("system", a)]
    n_facts = int(rng.integers(1, 4))
    rels = list(rng.permutation(RELATIONS))[:n_facts]
    if forced_relation and forced_relation not in rels:
        rels[0] = forced_relation
    for rel in rels:
        turns += _fact_pair(rng, team_id, kg, rel, questions)
    if rng.random() < spec.p_closing:
        q, a = _CHITCHAT[rng.integers(len(_CHITCHAT))]
        turns += [Turn("user", q), Turn("system", a)]
    return Dialogue(dialogue_id=dlg_id, team_id=team_id, turns=tuple(turns),
                    split=split)


def generate(spec: SyntheticSpec | None = None):
    """Returns (dialogues_by_split, kgs)."""
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(spec.seed)
    kgs = _build_kgs(spec)
    team_ids = sorted(kgs)
    splits: dict[str, list[Dialogue]] = {"train": [], "valid": [], "test": []}

    # first pass covers every (team, relation) pair in training
    forced = [(tid, rel) for tid in team_ids for rel in RELATIONS]
    counts = {"train": spec.n_train, "valid": spec.n_valid,
              "test": spec.n_test}
    for split, n in counts.items():
        questions = _TEST_QUESTIONS if split == "test" else _TRAIN_QUESTIONS
        for i in range(n):
            team_id = team_ids[int(rng.integers(len(team_ids)))]
            forced_rel = None
            if split == "train" and i < len(forced):
                team_id, forced_rel = forced[i]
            splits[split].append(_make_dialogue(
                rng, spec, f"syn-{split}-{i:04d}", team_id, kgs[team_id],
                questions, forced_relation=forced_rel, split=split))
    return splits, kgs


def write_corpus(root, spec: SyntheticSpec | None = None):
    """Materialize the corpus on disk: kg/*.tsv plus one JSONL per split."""
    root = Path(root)
    splits, kgs = generate(spec)
    kg_dir = root / "kg"
    kg_dir.mkdir(parents=True, exist_ok=True)
    for team_id, kg in kgs.items():
        lines = [f"{t.subject}\t{t.relation}\t{t.object}"
                 for t in kg.triples]
        (kg_dir / f"{team_id}.tsv").write_text("\n".join(lines) + "\n")
    for split, dialogues in splits.items():
        with open(root / f"{split}.jsonl", "w") as fh:
            for dlg in dialogues:
                fh.write(json.dumps({
                    "id": dlg.dialogue_id,
                    "team": dlg.team_id,
                    "turns": [{"speaker": t.speaker, "text": t.text}
                              for t in dlg.turns],
                }) + "\n")
    return splits, kgs
