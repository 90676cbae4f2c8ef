"""Normalization, tokenization, and the rule-based tagger."""

from kgcopy.text import CONTENT_TAGS, content_tokens, normalize, pos_tag, tokenize


def test_normalize_lowercases_and_collapses_whitespace():
    assert normalize("  Real   MADRID \n") == "real madrid"
    assert normalize("") == ""
    assert normalize("\t \n") == ""


def test_normalize_is_idempotent():
    for raw in ("Hello  World", "FC St. Pauli!", "3 - 1"):
        once = normalize(raw)
        assert normalize(once) == once


def test_tokenize_splits_punctuation():
    assert tokenize("Who is Arsenal's captain?") == [
        "who", "is", "arsenal", "'", "s", "captain", "?"]
    assert tokenize("3-1 win!") == ["3", "-", "1", "win", "!"]
    assert tokenize("") == []


def test_tokenize_round_trips_simple_sentences():
    toks = tokenize("the home ground is emirates stadium .")
    assert tokenize(" ".join(toks)) == toks


def test_pos_tag_rules():
    tokens = ["the", "captain", "is", "marcelo", "?", "1886", "founded",
              "know", "of"]
    assert pos_tag(tokens) == [
        "DET", "NOUN", "AUX", "NOUN", "PUNCT", "NUM", "VERB", "VERB", "ADP"]


def test_pos_tag_suffix_verbs_and_empty_token():
    assert pos_tag(["playing", "organize", ""]) == ["VERB", "VERB", "X"]


def test_content_tokens_drops_function_words():
    tokens = tokenize("what is the home ground of arsenal ?")
    assert content_tokens(tokens) == ["home", "ground", "arsenal"]


def test_content_tokens_falls_back_to_all_tokens():
    # nothing qualifies, so the full list comes back (non-empty input
    # must yield a non-empty gate query)
    tokens = ["of", "the", "?"]
    assert content_tokens(tokens) == tokens


def test_content_tokens_accepts_external_tags():
    tokens = ["alpha", "beta"]
    assert content_tokens(tokens, tags=["NOUN", "DET"]) == ["alpha"]
    assert content_tokens(tokens, tagger=lambda ts: ["VERB"] * len(ts)) == tokens


def test_content_tags_cover_nouns_and_verbs():
    assert {"NOUN", "PROPN", "VERB"} == set(CONTENT_TAGS)
