"""Episodic test-time adaptation engine.

The full method runs two stages per utterance on top of a parameter
snapshot that is always restored afterwards:

  stage 1 ("confidence"): minimize confidence-weighted frame entropy over
  the feature extractor plus encoder LN affines. Weights are sigmoid of
  entropy, gated to non-silent frames, and treated as constants of the
  step (no gradient flows through them).

  stage 2 ("consistency"): minimize plain frame entropy plus a temporal
  consistency penalty over all LN affines. The penalty pulls together
  smoothed feature vectors `window_k - 1` frames apart, anchored at
  non-silent frames; smoothing is a parameter-free self-attention over the
  current extractor features.

Baselines reuse the same stage runner so comparisons are apples-to-apples.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import torch

from .decode import greedy_decode, word_edit_distance
from .frames import (
    FrameAnalysis,
    FramePosterior,
    FRAME_STRATEGIES,
    analyze_frames,
    default_entropy_threshold,
    entropy_buckets,
    frame_entropy,
    posterior_from_logits,
)
from .model import (
    ParameterTag,
    PARAM_SCHEMES,
    ToyAcousticModel,
    parameter_tags,
    restore,
    select_parameters,
    snapshot,
)
from .toytask import Utterance

LR_LN_GRID = (2e-4, 5e-4, 8e-4)
LR_FE_GRID = (2e-5, 5e-5)


@dataclass
class AdaptationConfig:
    """Knobs of the episodic two-stage optimization (defaults: 10 total
    steps split 5/5, alpha 0.3, lr grids as in the reference setup)."""

    steps_stage1: int = 5
    steps_stage2: int = 5
    lr_ln: float = 2e-4
    lr_fe: float = 2e-5
    alpha: float = 0.3
    window_k: int = 4
    frame_strategy: str = "non_silent"
    scheme_stage1: str = "fe_plus_lns"
    scheme_stage2: str = "lns"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps_stage1 < 0 or self.steps_stage2 < 0:
            raise ValueError("step counts must be >= 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.window_k < 2:
            raise ValueError("window_k must be >= 2")
        if self.lr_ln <= 0 or self.lr_fe <= 0:
            raise ValueError("learning rates must be positive")
        if self.frame_strategy not in FRAME_STRATEGIES:
            raise ValueError(f"unknown frame strategy {self.frame_strategy!r}")
        for scheme in (self.scheme_stage1, self.scheme_stage2):
            if scheme not in PARAM_SCHEMES:
                raise ValueError(f"unknown parameter scheme {scheme!r}")

    @property
    def total_steps(self) -> int:
        return self.steps_stage1 + self.steps_stage2


@dataclass
class StepRecord:
    """State at the start of one optimization step plus that step's loss."""

    stage: str
    step: int
    loss: float
    frac_nonsil_high: float
    frac_nonsil_low: float
    frac_sil_high: float
    frac_sil_low: float
    mean_entropy_nonsilent: Optional[float]
    num_frames: int


@dataclass
class UtteranceReport:
    utt_id: str
    reference: str
    steps: list[StepRecord]
    transcript_before: str
    transcript_after: str
    wer_before: float
    wer_after: float
    errors_before: int
    errors_after: int
    num_ref_words: int
    stage_seconds: dict[str, float] = field(default_factory=dict)
    failed: bool = False
    error: Optional[str] = None


# -- losses ------------------------------------------------------------------


def cea_loss(posterior: FramePosterior, analysis: FrameAnalysis) -> torch.Tensor:
    """Confidence-weighted entropy: sum_i S_i * E_i with S_i held constant."""
    ent = frame_entropy(posterior)
    return (analysis.weights.to(ent.dtype) * ent).sum()


def self_attention_smooth(features: torch.Tensor) -> torch.Tensor:
    """Parameter-free self-attention: softmax(Z Z^T / sqrt(d)) @ Z.

    No learned projections, no masking; gradients flow through Z.
    """
    if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
        raise ValueError(f"features must be T x d with T, d >= 1, got {tuple(features.shape)}")
    if not torch.isfinite(features).all():
        raise ValueError("features contain non-finite values")
    scores = features @ features.transpose(0, 1) / math.sqrt(features.shape[1])
    return torch.softmax(scores, dim=-1) @ features


def stcr_loss(
    entropy: torch.Tensor,
    smoothed: torch.Tensor,
    silence_mask: torch.Tensor,
    k: int,
    alpha: float,
) -> torch.Tensor:
    """Entropy sum plus alpha * sum_i ||z'_{i+k-1} - z'_i|| over non-silent
    anchors i. The entropy term runs over all frames, unweighted; with
    k > T only the entropy term remains."""
    total = entropy.sum()
    num_frames = smoothed.shape[0]
    if alpha > 0 and k <= num_frames:
        span = num_frames - k + 1
        diff = smoothed[k - 1:] - smoothed[:span]
        dist = torch.linalg.vector_norm(diff, dim=1)
        gate = (~silence_mask[:span]).to(dist.dtype)
        total = total + alpha * (dist * gate).sum()
    return total


# -- stages ------------------------------------------------------------------

StageLoss = Callable[[FramePosterior, torch.Tensor, FrameAnalysis], torch.Tensor]


@dataclass
class Stage:
    name: str
    steps: int
    scheme: str
    loss_fn: StageLoss


def confidence_stage(config: AdaptationConfig) -> Stage:
    def loss_fn(posterior, features, analysis):
        return cea_loss(posterior, analysis)

    return Stage("confidence", config.steps_stage1, config.scheme_stage1, loss_fn)


def consistency_stage(config: AdaptationConfig) -> Stage:
    def loss_fn(posterior, features, analysis):
        ent = frame_entropy(posterior)
        smoothed = self_attention_smooth(features)
        return stcr_loss(ent, smoothed, analysis.silence_mask,
                         config.window_k, config.alpha)

    return Stage("consistency", config.steps_stage2, config.scheme_stage2, loss_fn)


def build_optimizer(model: ToyAcousticModel, scheme: str,
                    config: AdaptationConfig) -> torch.optim.Optimizer:
    """AdamW over the scheme's parameters with per-group learning rates.

    Extractor tensors adapt at lr_fe and everything else at lr_ln, except
    under the lns scheme, where every selected tensor is an LN affine and
    uses lr_ln regardless of where it sits.
    """
    selected = select_parameters(model, scheme)
    tags = parameter_tags(model)
    fe_params, other_params = [], []
    for name, param in selected:
        if scheme != "lns" and ParameterTag.FEATURE_EXTRACTOR in tags[name]:
            fe_params.append(param)
        else:
            other_params.append(param)
    groups = []
    if fe_params:
        groups.append({"params": fe_params, "lr": config.lr_fe})
    if other_params:
        groups.append({"params": other_params, "lr": config.lr_ln})
    return torch.optim.AdamW(groups, betas=config.betas, eps=config.eps,
                             weight_decay=config.weight_decay)


# -- per-utterance engine ------------------------------------------------


class NonFiniteLossError(RuntimeError):
    pass


def _make_record(stage: str, step: int, analysis: FrameAnalysis,
                 num_classes: int) -> StepRecord:
    buckets = entropy_buckets(analysis.entropy, analysis.silence_mask,
                              default_entropy_threshold(num_classes))
    nonsil = ~analysis.silence_mask
    mean_ent = float(analysis.entropy[nonsil].mean()) if nonsil.any() else None
    return StepRecord(
        stage=stage,
        step=step,
        loss=float("nan"),
        frac_nonsil_high=buckets.frac_nonsil_high,
        frac_nonsil_low=buckets.frac_nonsil_low,
        frac_sil_high=buckets.frac_sil_high,
        frac_sil_low=buckets.frac_sil_low,
        mean_entropy_nonsilent=mean_ent,
        num_frames=int(analysis.entropy.shape[0]),
    )


def run_adaptation(
    model: ToyAcousticModel,
    utterance: Utterance,
    stages: Sequence[Stage],
    config: AdaptationConfig,
) -> UtteranceReport:
    """Snapshot, run the given stages, decode, restore. Episodic by design.

    A non-finite loss aborts the utterance: the snapshot is restored and
    the failure recorded, with the unadapted transcript standing in for
    the adapted one.
    """
    word_map = model.word_map
    ref_words = utterance.reference_words()
    checkpoint = snapshot(model)
    wave = torch.as_tensor(utterance.waveform, dtype=torch.float32)

    records: list[StepRecord] = []
    stage_seconds: dict[str, float] = {}
    failed = False
    error: Optional[str] = None

    with torch.no_grad():
        _, logits = model(wave)
    before = greedy_decode(logits, model.blank_index, word_map)
    after = before

    try:
        global_step = 0
        for stage in stages:
            if stage.steps <= 0:
                continue
            started = time.perf_counter()
            optimizer = build_optimizer(model, stage.scheme, config)
            for _ in range(stage.steps):
                features, logits = model(wave)
                posterior = posterior_from_logits(logits, model.blank_index)
                analysis = analyze_frames(posterior, config.frame_strategy)
                record = _make_record(stage.name, global_step, analysis,
                                      model.num_classes)
                loss = stage.loss_fn(posterior, features, analysis)
                if not torch.isfinite(loss):
                    records.append(record)
                    raise NonFiniteLossError(
                        f"non-finite loss at step {global_step} of stage {stage.name}"
                    )
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                record.loss = float(loss.detach())
                records.append(record)
                global_step += 1
            stage_seconds[stage.name] = time.perf_counter() - started
        with torch.no_grad():
            _, logits = model(wave)
        after = greedy_decode(logits, model.blank_index, word_map)
    except NonFiniteLossError as exc:
        failed = True
        error = str(exc)
        after = before
    finally:
        restore(model, checkpoint)

    errors_before = word_edit_distance(ref_words, before.words)
    errors_after = word_edit_distance(ref_words, after.words)
    n_ref = len(ref_words)
    return UtteranceReport(
        utt_id=utterance.utt_id,
        reference=utterance.transcript,
        steps=records,
        transcript_before=before.text,
        transcript_after=after.text,
        wer_before=errors_before / n_ref,
        wer_after=errors_after / n_ref,
        errors_before=errors_before,
        errors_after=errors_after,
        num_ref_words=n_ref,
        stage_seconds=stage_seconds,
        failed=failed,
        error=error,
    )


def adapt_utterance(model: ToyAcousticModel, utterance: Utterance,
                    config: AdaptationConfig) -> UtteranceReport:
    """Full two-stage adaptation of a single utterance."""
    stages = [confidence_stage(config), consistency_stage(config)]
    return run_adaptation(model, utterance, stages, config)


# -- corpus-level runs ---------------------------------------------------


@dataclass
class StepAggregate:
    step: int
    stage: str
    mean_loss: float
    frac_nonsil_high: float
    frac_nonsil_low: float
    frac_sil_high: float
    frac_sil_low: float


@dataclass
class EpisodicResult:
    reports: list[UtteranceReport]
    wer_before: float
    wer_after: float
    werr: Optional[float]
    per_step: list[StepAggregate]
    num_failed: int


AdaptFn = Callable[[ToyAcousticModel, Utterance, AdaptationConfig], UtteranceReport]


def _failure_report(utterance: Utterance, exc: Exception) -> UtteranceReport:
    ref_words = utterance.reference_words()
    n_ref = max(len(ref_words), 1)
    return UtteranceReport(
        utt_id=utterance.utt_id,
        reference=utterance.transcript,
        steps=[],
        transcript_before="",
        transcript_after="",
        wer_before=len(ref_words) / n_ref,
        wer_after=len(ref_words) / n_ref,
        errors_before=len(ref_words),
        errors_after=len(ref_words),
        num_ref_words=len(ref_words),
        failed=True,
        error=f"{type(exc).__name__}: {exc}",
    )


def aggregate_steps(reports: Sequence[UtteranceReport],
                    aggregate: str = "pooled") -> list[StepAggregate]:
    """Combine per-step records across utterances.

    pooled weights bucket fractions by frame counts (one big pool of
    frames); per_utterance averages each utterance's fractions equally.
    """
    if aggregate not in ("pooled", "per_utterance"):
        raise ValueError(f"unknown aggregation {aggregate!r}")
    max_steps = max((len(r.steps) for r in reports), default=0)
    out: list[StepAggregate] = []
    for step in range(max_steps):
        rows = [r.steps[step] for r in reports if len(r.steps) > step]
        losses = [row.loss for row in rows if math.isfinite(row.loss)]
        if aggregate == "pooled":
            total = sum(row.num_frames for row in rows)
            fracs = [
                sum(getattr(row, name) * row.num_frames for row in rows) / total
                for name in ("frac_nonsil_high", "frac_nonsil_low",
                             "frac_sil_high", "frac_sil_low")
            ]
        else:
            n = len(rows)
            fracs = [
                sum(getattr(row, name) for row in rows) / n
                for name in ("frac_nonsil_high", "frac_nonsil_low",
                             "frac_sil_high", "frac_sil_low")
            ]
        out.append(StepAggregate(
            step=step,
            stage=rows[0].stage,
            mean_loss=sum(losses) / len(losses) if losses else float("nan"),
            frac_nonsil_high=fracs[0],
            frac_nonsil_low=fracs[1],
            frac_sil_high=fracs[2],
            frac_sil_low=fracs[3],
        ))
    return out


def summarize(reports: Sequence[UtteranceReport],
              aggregate: str = "pooled") -> EpisodicResult:
    total_ref = sum(r.num_ref_words for r in reports)
    if total_ref == 0:
        return EpisodicResult(reports=list(reports), wer_before=0.0, wer_after=0.0,
                              werr=None, per_step=[], num_failed=0)
    wer_before = sum(r.errors_before for r in reports) / total_ref
    wer_after = sum(r.errors_after for r in reports) / total_ref
    rel = (wer_before - wer_after) / wer_before if wer_before > 0 else None
    return EpisodicResult(
        reports=list(reports),
        wer_before=wer_before,
        wer_after=wer_after,
        werr=rel,
        per_step=aggregate_steps(reports, aggregate),
        num_failed=sum(1 for r in reports if r.failed),
    )


def run_episodic(
    model: ToyAcousticModel,
    utterances: Sequence[Utterance],
    config: AdaptationConfig,
    adapt_fn: AdaptFn = adapt_utterance,
    aggregate: str = "pooled",
    workers: int = 1,
) -> EpisodicResult:
    """Adapt each utterance independently (fresh snapshot/restore each time)
    and aggregate corpus WER and per-step bucket fractions.

    Individual failures are recorded and the run continues. With workers > 1
    each worker adapts its own model clone; results are merged in input
    order, so the outcome is identical to the sequential run.
    """
    if not utterances:
        return summarize([])

    def run_slice(worker_model: ToyAcousticModel, idx: Sequence[int],
                  sink: list) -> None:
        for i in idx:
            try:
                sink[i] = adapt_fn(worker_model, utterances[i], config)
            except Exception as exc:  # recorded, run continues
                sink[i] = _failure_report(utterances[i], exc)

    results: list[Optional[UtteranceReport]] = [None] * len(utterances)
    if workers <= 1:
        run_slice(model, range(len(utterances)), results)
    else:
        slices = [list(range(w, len(utterances), workers)) for w in range(workers)]
        clones = [model.clone() for _ in slices]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_slice, clone, idx, results)
                       for clone, idx in zip(clones, slices)]
            for fut in futures:
                fut.result()
    return summarize([r for r in results if r is not None], aggregate)
