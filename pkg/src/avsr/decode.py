"""Greedy CTC decoding and character error rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import BLANK, collapse


@dataclass
class DecodeResult:
    hypothesis: np.ndarray
    alignment: np.ndarray
    score: float


def best_path_decode(scores, blank: int = BLANK) -> DecodeResult:
    """Per-frame argmax (lowest index on ties) followed by the collapse map."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1:
        raise ValueError(f"expected (T, K) scores with T >= 1, got shape {scores.shape}")
    path = np.argmax(scores, axis=1)
    score = float(scores[np.arange(path.size), path].sum())
    return DecodeResult(collapse(path, blank), path, score)


def edit_distance(a, b) -> int:
    """Levenshtein distance with unit costs."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def cer(hypotheses, references) -> float:
    """Corpus CER in percent: total edits over total reference characters."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis and reference lists differ in length")
    n_ref = sum(len(r) for r in references)
    if n_ref == 0:
        raise ValueError("references contain no characters")
    edits = sum(edit_distance(h, r) for h, r in zip(hypotheses, references))
    return 100.0 * edits / n_ref
