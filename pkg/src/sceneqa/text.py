"""Shared string utilities: question normalization and noun morphology."""

from __future__ import annotations

import re

_PUNCT = re.compile(r"[^a-z0-9 ]+")
_SPACES = re.compile(r"\s+")

IMAGE_TOKEN = re.compile(r"^image\d+$")


def normalize(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace.

    Human typos are kept as-is; there is no spelling repair.
    """
    text = _SPACES.sub(" ", text.lower().replace("_", " "))
    return _SPACES.sub(" ", _PUNCT.sub(" ", text)).strip()


def tokenize(text: str) -> list[str]:
    normalized = normalize(text)
    return normalized.split(" ") if normalized else []


def pluralize(word: str) -> str:
    """Plural of a noun phrase (inflects the last word, regular forms only)."""
    head, _, last = word.rpartition(" ")
    prefix = head + " " if head else ""
    if re.search(r"(s|x|z|ch|sh)$", last):
        return prefix + last + "es"
    if re.search(r"[^aeiou]y$", last):
        return prefix + last[:-1] + "ies"
    if last.endswith("fe"):
        return prefix + last[:-2] + "ves"
    if last.endswith("f"):
        return prefix + last[:-1] + "ves"
    return prefix + last + "s"


def singular_candidates(word: str) -> list[str]:
    """Possible singular forms of a plural noun phrase, best guess first."""
    head, _, last = word.rpartition(" ")
    prefix = head + " " if head else ""
    out = []
    if last.endswith("ies") and len(last) > 3:
        out.append(prefix + last[:-3] + "y")
    if last.endswith("ves"):
        out.append(prefix + last[:-3] + "f")
        out.append(prefix + last[:-3] + "fe")
    if re.search(r"(ses|xes|zes|ches|shes)$", last):
        out.append(prefix + last[:-2])
    if last.endswith("s") and not last.endswith("ss"):
        out.append(prefix + last[:-1])
    return out


def word_variants(term: str) -> list[str]:
    """The term plus its singular/plural variants, deduplicated, term first."""
    seen = [term]
    for v in [pluralize(term)] + singular_candidates(term):
        if v not in seen:
            seen.append(v)
    return seen
