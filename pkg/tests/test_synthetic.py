"""The generated corpus keeps the promises the trainer relies on."""

import pytest

from kgcopy.corpus import load_dialogues
from kgcopy.kg import load_kg_dir
from kgcopy.synthetic import RELATIONS, SyntheticSpec, generate, write_corpus
from kgcopy.text import normalize, tokenize

SPEC = SyntheticSpec(n_teams=3, n_train=30, n_valid=6, n_test=8, seed=21)


@pytest.fixture(scope="module")
def corpus():
    return generate(SPEC)


def test_generate_is_deterministic(corpus):
    splits, kgs = corpus
    splits2, kgs2 = generate(SPEC)
    assert {t: kg.triples for t, kg in kgs.items()} == \
        {t: kg.triples for t, kg in kgs2.items()}
    for split in ("train", "valid", "test"):
        texts = [[t.text for t in d.turns] for d in splits[split]]
        texts2 = [[t.text for t in d.turns] for d in splits2[split]]
        assert texts == texts2


def test_split_sizes_and_structure(corpus):
    splits, kgs = corpus
    assert len(splits["train"]) == 30
    assert len(splits["valid"]) == 6
    assert len(splits["test"]) == 8
    assert len(kgs) == 3
    for kg in kgs.values():
        assert kg.k == len(RELATIONS)
        assert [t.relation for t in kg.triples] == RELATIONS
    for split, dialogues in splits.items():
        for d in dialogues:
            assert d.team_id in kgs
            assert len(d.turns) >= 2 and len(d.turns) % 2 == 0
            assert [t.speaker for t in d.turns[:2]] == ["user", "system"]


def test_every_team_relation_pair_is_trained(corpus):
    splits, kgs = corpus
    covered = set()
    for d in splits["train"]:
        kg = kgs[d.team_id]
        for turn in d.turns:
            if turn.speaker != "system":
                continue
            for pos, triple in enumerate(kg.triples):
                if triple.object in turn.text:
                    covered.add((d.team_id, triple.relation))
    assert covered == {(t, r) for t in kgs for r in RELATIONS}


def fact_question_templates(dialogues, kgs):
    """User wordings that precede a KG answer, with the team name masked."""
    templates = set()
    for d in dialogues:
        kg = kgs[d.team_id]
        team_name = d.team_id.replace("_", " ")
        for q_turn, a_turn in zip(d.turns, d.turns[1:]):
            if q_turn.speaker != "user":
                continue
            if any(t.object in a_turn.text for t in kg.triples):
                templates.add(q_turn.text.replace(team_name, "{team}"))
    return templates


def test_test_split_wordings_are_held_out(corpus):
    splits, kgs = corpus
    train_q = fact_question_templates(splits["train"], kgs)
    test_q = fact_question_templates(splits["test"], kgs)
    assert test_q  # the test split does ask about facts
    assert not train_q & test_q


def test_test_split_introduces_no_new_words(corpus):
    splits, _ = corpus
    def words(dialogues):
        out = set()
        for d in dialogues:
            for turn in d.turns:
                out.update(tokenize(normalize(turn.text)))
        return out
    train_words = words(splits["train"])
    assert words(splits["test"]) <= train_words


def test_write_corpus_round_trip(tmp_path):
    splits, kgs = write_corpus(tmp_path, SPEC)
    loaded_kgs = load_kg_dir(tmp_path / "kg")
    assert set(loaded_kgs) == set(kgs)
    for team, kg in kgs.items():
        assert loaded_kgs[team].triples == kg.triples
    for split, dialogues in splits.items():
        loaded = load_dialogues(tmp_path / f"{split}.jsonl")
        assert len(loaded) == len(dialogues)
        assert [d.dialogue_id for d in loaded] == \
            [d.dialogue_id for d in dialogues]
        assert [[t.text for t in d.turns] for d in loaded] == \
            [[t.text for t in d.turns] for d in dialogues]
        # stem-derived split tag survives the round trip
        assert all(d.split == split for d in loaded)


def test_too_many_teams_rejected():
    with pytest.raises(ValueError, match="at most"):
        generate(SyntheticSpec(n_teams=99))
