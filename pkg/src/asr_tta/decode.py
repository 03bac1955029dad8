"""Greedy CTC decoding and word-error-rate metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch


@dataclass
class Transcript:
    """Decoded word sequence plus the collapsed class indices it came from."""

    words: list[str]
    token_ids: list[int]

    @property
    def text(self) -> str:
        return " ".join(self.words)


def greedy_path(logits) -> np.ndarray:
    """Per-frame argmax class indices (ties go to the lowest index)."""
    if isinstance(logits, torch.Tensor):
        logits = logits.detach().cpu().numpy()
    arr = np.asarray(logits)
    if arr.ndim != 2:
        raise ValueError(f"logits must be T x C, got shape {arr.shape}")
    return np.argmax(arr, axis=1)


def collapse_repeats(path: Sequence[int], blank_index: int) -> list[int]:
    """Collapse consecutive repeats, then drop blanks (textbook CTC rule)."""
    out: list[int] = []
    prev: Optional[int] = None
    for c in path:
        c = int(c)
        if c != prev and c != blank_index:
            out.append(c)
        prev = c
    return out


def greedy_decode(logits, blank_index: int, word_map: Sequence[Optional[str]]) -> Transcript:
    """Greedy-decode logits into a Transcript.

    `word_map[c]` gives the word emitted for class c, or None for classes
    that produce no word (blank, separators).
    """
    path = greedy_path(logits)
    token_ids = collapse_repeats(path, blank_index)
    words = [word_map[c] for c in token_ids if word_map[c] is not None]
    return Transcript(words=words, token_ids=token_ids)


def tokenize(text: str) -> list[str]:
    """Whitespace word tokenization after lowercasing."""
    return text.lower().split()


def word_edit_distance(reference: Sequence[str], hypothesis: Sequence[str]) -> int:
    """Minimal word-level edit distance (substitutions + insertions + deletions)."""
    m = len(hypothesis)
    prev = list(range(m + 1))
    for i, r in enumerate(reference, start=1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (r != hypothesis[j - 1])
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, sub)
        prev = cur
    return prev[m]


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> float:
    """Word error rate: edit distance over reference length. May exceed 1."""
    if len(reference) == 0:
        raise ValueError("reference must be non-empty")
    return word_edit_distance(reference, hypothesis) / len(reference)


def werr(wer_source: float, wer_adapted: float) -> float:
    """Relative word-error-rate reduction."""
    if wer_source == 0:
        raise ValueError("wer_source must be positive")
    return (wer_source - wer_adapted) / wer_source


def corpus_wer(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Aggregate WER as total errors over total reference words."""
    total_err = 0
    total_ref = 0
    for reference, hypothesis in pairs:
        if len(reference) == 0:
            raise ValueError("reference must be non-empty")
        total_err += word_edit_distance(reference, hypothesis)
        total_ref += len(reference)
    if total_ref == 0:
        raise ValueError("no reference words")
    return total_err / total_ref
