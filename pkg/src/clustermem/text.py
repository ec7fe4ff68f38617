"""Tokenization helpers shared by the embedder, gateway fallbacks and metrics."""
from __future__ import annotations

import re
import string
from collections import Counter

_WORD = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)?")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")

STOPWORDS = frozenset(
    """a an the and or but if then else of to in on at for with by from as is are was
    were be been being it its this that these those i you he she we they me him her us
    them my your his our their do does did done have has had not no so than too very
    can could should would will just about into over under up down out what which who
    whom when where why how all any both each few more most other some such only own
    same s t don now there here also""".split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; apostrophes inside words are kept."""
    return _WORD.findall(text.lower())


def first_sentence(text: str) -> str:
    text = " ".join(text.split())
    if not text:
        return ""
    return _SENTENCE_END.split(text, maxsplit=1)[0]


def frequent_terms(texts, n: int, exclude=()) -> list[str]:
    """Most frequent non-stopword tokens, ties broken by first occurrence."""
    counts: Counter = Counter()
    first_seen: dict[str, int] = {}
    position = 0
    skip = STOPWORDS | set(exclude)
    for text in texts:
        for token in tokenize(text):
            if token in skip or len(token) < 2:
                continue
            counts[token] += 1
            first_seen.setdefault(token, position)
            position += 1
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return ranked[:n]


def strip_punctuation(text: str) -> str:
    return text.translate(_PUNCT_TABLE)
