"""Edit distance and corpus-level character error rate.

CER is micro-averaged: pooled edit counts over pooled reference length, so
long utterances weigh more than short ones. Sequences are compared at Unicode
scalar granularity and whitespace counts like any other character.
"""

from __future__ import annotations

from typing import Iterable, Sequence


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum number of insertions, deletions, and substitutions turning *a* into *b*."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, 1):
        current = [i] + [0] * len(b)
        for j, item_b in enumerate(b, 1):
            cost = 0 if item_a == item_b else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous = current
    return previous[len(b)]


def corpus_cer(pairs: Iterable[tuple[str, str]]) -> float:
    """Pooled CER percent over (reference, hypothesis) pairs."""
    total_edits = 0
    total_length = 0
    for reference, hypothesis in pairs:
        total_edits += levenshtein(reference, hypothesis)
        total_length += len(reference)
    if total_length == 0:
        raise ValueError("total reference length is zero")
    return 100.0 * total_edits / total_length
