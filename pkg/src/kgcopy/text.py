"""Tokenization, normalization, and a small rule-based part-of-speech tagger.

Every component of the pipeline (KG loading, answer linking, vocabulary,
metrics) shares the same normalization so that entity strings compare
consistently: Unicode NFC, lowercase, collapsed whitespace, punctuation
split into its own tokens.

The tagger exists only to separate content words (nouns, proper nouns,
verbs) from function words for the gate's query embedding. It is a
closed-class lexicon plus a few suffix heuristics, defaulting unknown
open-class words to NOUN. Any callable with the same signature can be
injected in its place (see :func:`content_tokens`).
"""

from __future__ import annotations

import re
import unicodedata
from typing import Callable, Iterable, Sequence

__all__ = [
    "normalize",
    "tokenize",
    "pos_tag",
    "content_tokens",
    "CONTENT_TAGS",
]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

#: Tags whose tokens count as content words for the gate query.
CONTENT_TAGS = frozenset({"NOUN", "PROPN", "VERB"})

# Closed-class function words. Membership decides "not a content word";
# the exact tag only needs to be outside CONTENT_TAGS.
_CLOSED_CLASS = {
    "DET": {"a", "an", "the", "this", "that", "these", "those", "some",
            "any", "no", "every", "each", "either", "neither", "both",
            "all", "most", "many", "much", "few", "such"},
    "PRON": {"i", "me", "my", "mine", "myself", "you", "your", "yours",
             "yourself", "he", "him", "his", "himself", "she", "her",
             "hers", "herself", "it", "its", "itself", "we", "us", "our",
             "ours", "ourselves", "they", "them", "their", "theirs",
             "themselves", "who", "whom", "whose", "which", "what",
             "someone", "anyone", "everyone", "nothing", "something",
             "anything", "everything", "one"},
    "ADP": {"of", "in", "on", "at", "by", "for", "with", "about",
            "against", "between", "into", "through", "during", "before",
            "after", "above", "below", "to", "from", "up", "down", "out",
            "off", "over", "under", "near", "across", "around", "since",
            "until", "upon", "without", "within", "among", "via", "per"},
    "CONJ": {"and", "or", "but", "nor", "so", "yet", "if", "because",
             "although", "though", "while", "whereas", "unless", "than",
             "whether", "as"},
    "AUX": {"am", "is", "are", "was", "were", "be", "been", "being",
            "have", "has", "had", "having", "do", "does", "did", "doing",
            "will", "would", "shall", "should", "may", "might", "must",
            "can", "could", "ought"},
    "ADV": {"not", "n't", "very", "too", "also", "just", "only", "quite",
            "really", "there", "here", "when", "where", "why", "how",
            "then", "now", "again", "ever", "never", "always", "often",
            "sometimes", "still", "even", "well", "much", "more", "less",
            "pretty", "maybe", "perhaps", "however", "please"},
    "INTJ": {"yes", "yeah", "yep", "no", "nope", "hi", "hello", "hey",
             "wow", "oh", "ok", "okay", "thanks", "thank", "bye",
             "goodbye", "hmm", "huh", "sure"},
}

_CLOSED_LOOKUP = {
    word: tag for tag, words in _CLOSED_CLASS.items() for word in words
}

# Small lexicon of frequent conversational verbs that carry content
# (suffix rules miss bare forms).
_VERB_LEXICON = {
    "know", "think", "like", "love", "hate", "want", "win", "won",
    "lose", "lost", "play", "plays", "go", "goes", "went", "say",
    "says", "said", "see", "saw", "tell", "told", "ask", "asked",
    "score", "scored", "beat", "support", "watch", "hope", "believe",
    "mean", "guess", "remember", "feel", "get", "got", "give", "gave",
    "make", "made", "take", "took", "come", "came", "become", "became",
    "happen", "call", "called", "sign", "signed", "join", "joined",
}

_VERB_SUFFIXES = ("ing", "ed", "ify", "ize", "ise")


def normalize(text: str) -> str:
    """NFC-normalize, lowercase, and collapse internal whitespace."""
    text = unicodedata.normalize("NFC", text)
    return " ".join(text.lower().split())


def tokenize(text: str) -> list[str]:
    """Split normalized text on whitespace and punctuation.

    Punctuation characters are kept, each as its own token::

        >>> tokenize("Who is Arsenal's captain?")
        ['who', 'is', 'arsenal', "'", 's', 'captain', '?']
    """
    return _TOKEN_RE.findall(normalize(text))


def pos_tag(tokens: Sequence[str]) -> list[str]:
    """Tag tokens with a coarse part of speech.

    Closed-class words come from a fixed lexicon; digits become NUM and
    punctuation PUNCT; a handful of suffix rules and a verb lexicon mark
    VERBs; everything else defaults to NOUN. The output is only consumed
    through :data:`CONTENT_TAGS` membership.
    """
    tags = []
    for tok in tokens:
        if not tok:
            tags.append("X")
        elif not any(ch.isalnum() for ch in tok):
            tags.append("PUNCT")
        elif tok[0].isdigit():
            tags.append("NUM")
        elif tok in _CLOSED_LOOKUP:
            tags.append(_CLOSED_LOOKUP[tok])
        elif tok in _VERB_LEXICON or tok.endswith(_VERB_SUFFIXES):
            tags.append("VERB")
        else:
            tags.append("NOUN")
    return tags


def content_tokens(
    tokens: Sequence[str],
    tags: Sequence[str] | None = None,
    tagger: Callable[[Sequence[str]], Iterable[str]] = pos_tag,
) -> list[str]:
    """Return the content-word subset of ``tokens``.

    ``tags`` may be supplied directly (e.g. from an external tagger);
    otherwise ``tagger`` is applied. Falls back to all tokens when
    nothing qualifies, so the result is non-empty whenever the input is.
    """
    if tags is None:
        tags = list(tagger(tokens))
    kept = [t for t, tag in zip(tokens, tags) if tag in CONTENT_TAGS]
    return kept if kept else list(tokens)
