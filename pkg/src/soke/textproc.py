"""Word-level text normalization shared by the vocabulary, the retrieval
dictionary, and the synthetic lexicon."""

from __future__ import annotations


def tokenize_words(text: str) -> list[str]:
    """Lowercased whitespace tokenization."""
    return text.lower().split()


def lemmatize(word: str) -> str:
    """Lowercase plus a small English-style suffix stripper (-s, -ing, -ed).

    Real lexicons can plug in their own lemmatizer wherever this is accepted
    as a callable.
    """
    w = word.lower().strip()
    for suffix in ("ing", "ed", "s"):
        if w.endswith(suffix) and len(w) - len(suffix) >= 3:
            return w[: -len(suffix)]
    return w
