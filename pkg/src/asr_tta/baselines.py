"""Reference adaptation methods, built on the same stage runner as the
full method so every comparison shares forward paths, optimizer setup,
and episodic reset.

suta_like is a simplified proxy (entropy minimization over extractor +
LN affines, no class-confusion term) and is labeled as such in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import torch

from .adapt import (
    AdaptationConfig,
    Stage,
    UtteranceReport,
    confidence_stage,
    consistency_stage,
    frame_entropy,
    run_adaptation,
    self_attention_smooth,
    stcr_loss,
)
from .model import ToyAcousticModel
from .toytask import Utterance

METHOD_NAMES = (
    "source",
    "tent",
    "sar_filter",
    "teco",
    "suta_like",
    "ours",
    "ours_wo_stcr",
    "ours_wo_cea",
)


@dataclass
class BaselineSpec:
    """Per-method knobs on top of the shared adaptation config."""

    method: str = "tent"
    threshold_factor: float = 0.4   # entropy filter cut, in units of ln C
    coherence_weight: float = 0.3

    def __post_init__(self) -> None:
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHOD_NAMES}")
        if self.threshold_factor < 0:
            raise ValueError("threshold_factor must be >= 0")
        if self.coherence_weight < 0:
            raise ValueError("coherence_weight must be >= 0")


def _entropy_loss(posterior, features, analysis) -> torch.Tensor:
    return frame_entropy(posterior).sum()


def tent_adapt(model: ToyAcousticModel, utterance: Utterance,
               steps: int, lr: float,
               config: Optional[AdaptationConfig] = None) -> UtteranceReport:
    """Unweighted entropy minimization over LN affines; episodic."""
    cfg = replace(config or AdaptationConfig(), lr_ln=lr)
    stage = Stage("tent", steps, "lns", _entropy_loss)
    return run_adaptation(model, utterance, [stage], cfg)


def sar_filter_adapt(model: ToyAcousticModel, utterance: Utterance,
                     steps: int, lr: float, threshold_factor: float = 0.4,
                     config: Optional[AdaptationConfig] = None) -> UtteranceReport:
    """Entropy minimization restricted to frames below the entropy cut
    threshold_factor * ln(C); high-entropy frames are dropped. A step where
    every frame is filtered is a zero-gradient step, not an error."""
    cfg = replace(config or AdaptationConfig(), lr_ln=lr)
    threshold = threshold_factor * math.log(model.num_classes)

    def loss_fn(posterior, features, analysis):
        ent = frame_entropy(posterior)
        keep = (ent.detach() < threshold).to(ent.dtype)
        return (ent * keep).sum()

    stage = Stage("sar_filter", steps, "lns", loss_fn)
    return run_adaptation(model, utterance, [stage], cfg)


def teco_adapt(model: ToyAcousticModel, utterance: Utterance,
               steps: int, lr: float, coherence_weight: float = 0.3,
               config: Optional[AdaptationConfig] = None) -> UtteranceReport:
    """Entropy minimization plus adjacent-frame coherence (no silence gating,
    no confidence stage) over LN affines; uses the same smoothed feature
    space as the consistency stage for comparability."""
    cfg = replace(config or AdaptationConfig(), lr_ln=lr)

    def loss_fn(posterior, features, analysis):
        ent = frame_entropy(posterior)
        if coherence_weight == 0:
            return ent.sum()
        smoothed = self_attention_smooth(features)
        no_gate = torch.zeros(smoothed.shape[0], dtype=torch.bool)
        return stcr_loss(ent, smoothed, no_gate, k=2, alpha=coherence_weight)

    stage = Stage("teco", steps, "lns", loss_fn)
    return run_adaptation(model, utterance, [stage], cfg)


def suta_like_adapt(model: ToyAcousticModel, utterance: Utterance,
                    steps: int, lr_ln: float, lr_fe: float,
                    config: Optional[AdaptationConfig] = None) -> UtteranceReport:
    """Unweighted entropy minimization over extractor + LN affines (the
    simplified proxy: no minimum-class-confusion term)."""
    cfg = replace(config or AdaptationConfig(), lr_ln=lr_ln, lr_fe=lr_fe)
    stage = Stage("suta_like", steps, "fe_plus_lns", _entropy_loss)
    return run_adaptation(model, utterance, [stage], cfg)


def source_run(model: ToyAcousticModel, utterance: Utterance,
               config: Optional[AdaptationConfig] = None) -> UtteranceReport:
    """No adaptation: decode only (0 steps)."""
    cfg = config or AdaptationConfig()
    return run_adaptation(model, utterance, [], cfg)


def ablation_variant(model: ToyAcousticModel, utterance: Utterance,
                     config: AdaptationConfig, variant: str) -> UtteranceReport:
    """wo_stcr: confidence stage only for the full step budget.
    wo_cea: consistency stage only for the full step budget."""
    budget = config.total_steps
    if variant == "wo_stcr":
        cfg = replace(config, steps_stage1=budget, steps_stage2=0)
        return run_adaptation(model, utterance, [confidence_stage(cfg)], cfg)
    if variant == "wo_cea":
        cfg = replace(config, steps_stage1=0, steps_stage2=budget)
        return run_adaptation(model, utterance, [consistency_stage(cfg)], cfg)
    raise ValueError(f"unknown ablation variant {variant!r}")


AdaptRunner = Callable[[ToyAcousticModel, Utterance, AdaptationConfig], UtteranceReport]


def method_runner(method: str, spec: Optional[BaselineSpec] = None) -> AdaptRunner:
    """Resolve a method name into an adapt_fn for run_episodic."""
    from .adapt import adapt_utterance

    spec = spec or BaselineSpec(method=method if method in METHOD_NAMES else "tent")
    if method == "ours":
        return adapt_utterance
    if method == "source":
        return lambda m, u, c: source_run(m, u, c)
    if method == "tent":
        return lambda m, u, c: tent_adapt(m, u, c.total_steps, c.lr_ln, config=c)
    if method == "sar_filter":
        return lambda m, u, c: sar_filter_adapt(
            m, u, c.total_steps, c.lr_ln, spec.threshold_factor, config=c)
    if method == "teco":
        return lambda m, u, c: teco_adapt(
            m, u, c.total_steps, c.lr_ln, spec.coherence_weight, config=c)
    if method == "suta_like":
        return lambda m, u, c: suta_like_adapt(
            m, u, c.total_steps, c.lr_ln, c.lr_fe, config=c)
    if method == "ours_wo_stcr":
        return lambda m, u, c: ablation_variant(m, u, c, "wo_stcr")
    if method == "ours_wo_cea":
        return lambda m, u, c: ablation_variant(m, u, c, "wo_cea")
    raise ValueError(f"unknown method {method!r}, expected one of {METHOD_NAMES}")
