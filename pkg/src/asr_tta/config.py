"""Experiment configuration and manifest files.

The config is one declarative JSON document; CLI flags override individual
fields and the resolved config is echoed into the output directory.
Manifests are JSON-lines, one record per audio file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .adapt import AdaptationConfig
from .baselines import METHOD_NAMES, BaselineSpec
from .corruption import GAUSSIAN_AMPLITUDES, CorruptionSpec
from .toytask import ToyTaskSpec


class ConfigError(ValueError):
    """Invalid configuration or manifest; maps to CLI exit code 1."""


@dataclass
class TrainSettings:
    train_size: int = 1100
    holdout_size: int = 200
    epochs: int = 28
    batch_size: int = 12
    lr: float = 4e-3
    target_wer: float = 0.02
    confidence_penalty: float = 0.4


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/exp"
    toy_task: ToyTaskSpec = field(default_factory=ToyTaskSpec)
    train: TrainSettings = field(default_factory=TrainSettings)
    eval_corpus_size: int = 100
    corruptions: list[CorruptionSpec] = field(default_factory=lambda: [
        CorruptionSpec(kind="gaussian", gaussian_amplitude=a)
        for a in GAUSSIAN_AMPLITUDES
    ])
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    methods: list[str] = field(default_factory=lambda: ["source", "ours"])
    checkpoint: Optional[str] = None
    manifest: Optional[str] = None

    def __post_init__(self) -> None:
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise ConfigError(f"unknown method {m!r}, expected one of {METHOD_NAMES}")
        if self.eval_corpus_size < 0:
            raise ConfigError("eval_corpus_size must be >= 0")


def _build(cls, data: dict, label: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {label} fields: {sorted(unknown)}")
    fixed = dict(data)
    for f in dataclasses.fields(cls):
        if f.name in fixed and isinstance(fixed[f.name], list) and isinstance(f.default, tuple):
            fixed[f.name] = tuple(fixed[f.name])
    try:
        return cls(**fixed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {label} config: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    kwargs = {}
    if "toy_task" in data:
        kwargs["toy_task"] = _build(ToyTaskSpec, data.pop("toy_task"), "toy_task")
    if "train" in data:
        kwargs["train"] = _build(TrainSettings, data.pop("train"), "train")
    if "adaptation" in data:
        kwargs["adaptation"] = _build(AdaptationConfig, data.pop("adaptation"), "adaptation")
    if "baseline" in data:
        kwargs["baseline"] = _build(BaselineSpec, data.pop("baseline"), "baseline")
    if "corruptions" in data:
        kwargs["corruptions"] = [
            _build(CorruptionSpec, c, "corruption") for c in data.pop("corruptions")
        ]
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    kwargs.update(data)
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def config_to_dict(config: ExperimentConfig) -> dict:
    return asdict(config)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def dump_config(config: ExperimentConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")


# -- manifests ---------------------------------------------------------------


@dataclass
class ManifestEntry:
    audio: str
    transcript: str
    corruption: Optional[dict] = None


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(asdict(e), sort_keys=True) + "\n")


def read_manifest(path, check_paths: bool = True) -> list[ManifestEntry]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "audio" not in rec or "transcript" not in rec:
                raise ConfigError(f"{path}:{lineno}: needs audio and transcript fields")
            if not str(rec["transcript"]).strip():
                raise ConfigError(f"{path}:{lineno}: empty transcript")
            entry = ManifestEntry(audio=rec["audio"], transcript=rec["transcript"],
                                  corruption=rec.get("corruption"))
            if check_paths and not Path(entry.audio).exists():
                raise ConfigError(f"{path}:{lineno}: audio file not found: {entry.audio}")
            entries.append(entry)
    if not entries:
        raise ConfigError(f"manifest {path} is empty")
    return entries
