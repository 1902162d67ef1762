"""Edit distance and corpus-level label error rate."""

from __future__ import annotations

from typing import Iterable


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def label_error_rate(pairs: Iterable[tuple[str, str]]) -> float:
    """Sum of edit distances over the sum of ground-truth lengths.

    ``pairs`` yields ``(truth, prediction)``; every truth must be nonempty.
    """
    errors = 0
    length = 0
    for truth, pred in pairs:
        if not truth:
            raise ValueError("ground-truth label is empty")
        errors += edit_distance(truth, pred)
        length += len(truth)
    if length == 0:
        raise ValueError("no samples")
    return errors / length
