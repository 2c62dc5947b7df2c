"""Tokenization helpers shared by analytics and retrieval."""

from __future__ import annotations

import string

# Small fixed stopword list used only for fallback keywording and key-point
# term vectors. English function words plus a handful of high-frequency
# Chinese particles, since source material may be Chinese counseling text.
STOPWORDS = frozenset(
    """
    a an the and or but if then than so of to in on at by for from with
    about as into over under is are was were be been being am do does did
    have has had i me my we our you your he him his she her it its they
    them their this that these those what which who whom not no yes too
    very can could will would should may might must there here when where
    why how all any both each few more most other some such only own same
    just dont don't im i'm
    的 了 吗 呢 我 你 他 她 它 是 在 和 也 都 很 就 不
    """.split()
)

_PUNCT = string.punctuation + "“”‘’…—，。！？；：、"


def tokenize(text: str) -> list[str]:
    """Whitespace tokens, lowercased. The analytics tokenizer."""
    return text.lower().split()


def content_words(text: str) -> list[str]:
    """Lowercased tokens with edge punctuation stripped and stopwords removed."""
    words = []
    for token in tokenize(text):
        token = token.strip(_PUNCT)
        if token and token not in STOPWORDS:
            words.append(token)
    return words
