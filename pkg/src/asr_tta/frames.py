"""Frame-level analysis of CTC posteriors.

Pure, stateless functions from per-frame class posteriors to the
quantities the adaptation losses and the entropy-distribution analysis
are built on: Shannon entropies, argmax pseudo-labels, blank-as-silence
masks, confidence weights, and the four-way entropy buckets.

Everything here is safe to call concurrently. Entropy keeps the autograd
graph of its input; all other outputs are detached constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

FRAME_STRATEGIES = ("non_silent", "silent", "all")

# Fraction of the maximum entropy ln(C) used as the high/low split.
BUCKET_THRESHOLD_FACTOR = 0.4

# Floor inside log() so one-hot rows yield exact 0 entropy with finite grads.
_LOG_EPS = 1e-12


@dataclass
class FramePosterior:
    """T x C matrix of per-frame class probabilities plus the blank index.

    Rows must be valid probability distributions (sum to 1 within 1e-6,
    entries in [0, 1], no NaN). `probs` may carry gradients.
    """

    probs: torch.Tensor
    blank_index: int

    def __post_init__(self) -> None:
        p = self.probs
        if p.ndim != 2:
            raise ValueError(f"posterior must be T x C, got shape {tuple(p.shape)}")
        num_classes = p.shape[1]
        if num_classes < 2:
            raise ValueError("posterior needs at least 2 classes")
        if not 0 <= self.blank_index < num_classes:
            raise ValueError(f"blank_index {self.blank_index} out of range for C={num_classes}")
        with torch.no_grad():
            if not torch.isfinite(p).all():
                raise ValueError("posterior contains NaN or infinite entries")
            if (p < 0).any() or (p > 1 + 1e-6).any():
                raise ValueError("posterior entries must lie in [0, 1]")
            row_sums = p.sum(dim=1)
            if (row_sums - 1.0).abs().max().item() > 1e-6:
                raise ValueError("posterior rows must sum to 1 within 1e-6")

    @property
    def num_frames(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]


@dataclass
class FrameAnalysis:
    """Detached per-frame quantities recomputed at every adaptation step."""

    entropy: torch.Tensor       # (T,) nats, detached
    pseudo_label: torch.Tensor  # (T,) long
    silence_mask: torch.Tensor  # (T,) bool, true = argmax is blank
    weights: torch.Tensor       # (T,) float in [0, 1)


@dataclass
class EntropyBuckets:
    """Fractions of frames in {non-silent, silent} x {high, low} entropy."""

    frac_nonsil_high: float
    frac_nonsil_low: float
    frac_sil_high: float
    frac_sil_low: float
    threshold: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.frac_nonsil_high, self.frac_nonsil_low,
                self.frac_sil_high, self.frac_sil_low)


def posterior_from_logits(logits: torch.Tensor, blank_index: int) -> FramePosterior:
    return FramePosterior(torch.softmax(logits, dim=-1), blank_index)


def frame_entropy(posterior: FramePosterior) -> torch.Tensor:
    """Shannon entropy of each frame's posterior, in nats.

    0 * ln 0 is taken as 0, so one-hot rows give exactly 0. Gradients flow
    through `posterior.probs`.
    """
    p = posterior.probs
    return -(p * torch.log(p.clamp_min(_LOG_EPS))).sum(dim=1)


def pseudo_labels_and_silence(posterior: FramePosterior) -> tuple[torch.Tensor, torch.Tensor]:
    """Argmax pseudo-labels (ties to the lowest class index) and blank mask."""
    probs = posterior.probs.detach().cpu().numpy()
    labels = np.argmax(probs, axis=1)  # np.argmax takes the first maximum
    pseudo = torch.from_numpy(labels.astype(np.int64))
    silence = pseudo == posterior.blank_index
    return pseudo, silence


def confidence_weights(
    entropy: torch.Tensor,
    silence_mask: torch.Tensor,
    strategy: str = "non_silent",
) -> torch.Tensor:
    """Sigmoid-of-entropy weights gated by the frame-selection strategy.

    non_silent zeroes silent frames, silent zeroes non-silent frames,
    all applies no gate. The result is detached (weights act as constants
    of the current step).
    """
    if strategy not in FRAME_STRATEGIES:
        raise ValueError(f"unknown frame strategy {strategy!r}, expected one of {FRAME_STRATEGIES}")
    if entropy.shape != silence_mask.shape:
        raise ValueError("entropy and silence_mask must have the same length")
    weights = torch.sigmoid(entropy.detach())
    if strategy == "non_silent":
        weights = weights * (~silence_mask)
    elif strategy == "silent":
        weights = weights * silence_mask
    return weights


def analyze_frames(posterior: FramePosterior, strategy: str = "non_silent") -> FrameAnalysis:
    """Compute the full detached per-frame analysis for one posterior."""
    entropy = frame_entropy(posterior).detach()
    pseudo, silence = pseudo_labels_and_silence(posterior)
    weights = confidence_weights(entropy, silence, strategy)
    return FrameAnalysis(entropy=entropy, pseudo_label=pseudo,
                         silence_mask=silence, weights=weights)


def default_entropy_threshold(num_classes: int) -> float:
    """High/low entropy split at 0.4 * ln(C)."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    return BUCKET_THRESHOLD_FACTOR * math.log(num_classes)


def entropy_buckets(
    entropy: torch.Tensor,
    silence_mask: torch.Tensor,
    threshold: float,
) -> EntropyBuckets:
    """Classify every frame into {non-sil, sil} x {high, low} and return fractions."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    total = entropy.shape[0]
    if total == 0:
        raise ValueError("cannot bucket an empty frame sequence")
    if entropy.shape != silence_mask.shape:
        raise ValueError("entropy and silence_mask must have the same length")
    ent = entropy.detach()
    high = ent > threshold
    sil = silence_mask
    n = float(total)
    return EntropyBuckets(
        frac_nonsil_high=float((high & ~sil).sum().item()) / n,
        frac_nonsil_low=float((~high & ~sil).sum().item()) / n,
        frac_sil_high=float((high & sil).sum().item()) / n,
        frac_sil_low=float((~high & sil).sum().item()) / n,
        threshold=float(threshold),
    )
