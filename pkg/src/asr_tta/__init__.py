"""Episodic test-time adaptation for CTC acoustic models.

Core pieces: frame-level entropy analysis (frames), a pluggable toy
acoustic model with parameter-group tagging (model), the two-stage
adaptation engine and baselines (adapt, baselines), corruption synthesis
(corruption), greedy decoding + WER (decode), and a CLI harness (cli).
"""

from .adapt import (
    AdaptationConfig,
    EpisodicResult,
    UtteranceReport,
    adapt_utterance,
    cea_loss,
    run_episodic,
    self_attention_smooth,
    stcr_loss,
)
from .frames import (
    EntropyBuckets,
    FrameAnalysis,
    FramePosterior,
    analyze_frames,
    confidence_weights,
    default_entropy_threshold,
    entropy_buckets,
    frame_entropy,
    pseudo_labels_and_silence,
)
from .model import (
    Checkpoint,
    ModelConfig,
    ParameterTag,
    ToyAcousticModel,
    build_model,
    load_checkpoint,
    parameter_tags,
    restore,
    save_checkpoint,
    select_parameters,
    snapshot,
)
from .toytask import ToyTaskSpec, Utterance, generate_corpus, generate_toy_utterance

__all__ = [
    "AdaptationConfig",
    "Checkpoint",
    "EntropyBuckets",
    "EpisodicResult",
    "FrameAnalysis",
    "FramePosterior",
    "ModelConfig",
    "ParameterTag",
    "ToyAcousticModel",
    "ToyTaskSpec",
    "Utterance",
    "UtteranceReport",
    "adapt_utterance",
    "analyze_frames",
    "build_model",
    "cea_loss",
    "confidence_weights",
    "default_entropy_threshold",
    "entropy_buckets",
    "frame_entropy",
    "generate_corpus",
    "generate_toy_utterance",
    "load_checkpoint",
    "parameter_tags",
    "pseudo_labels_and_silence",
    "restore",
    "run_episodic",
    "save_checkpoint",
    "select_parameters",
    "self_attention_smooth",
    "snapshot",
    "stcr_loss",
]

__version__ = "0.1.0"
