"""Reference acoustic model: waveform conv extractor + transformer encoder.

The model decomposes as extract -> encode so the two halves can be adapted
separately. Every trainable tensor is tagged with the parameter groups used
for selective adaptation (feature_extractor / ln_affine / bias / other); LN
shift terms deliberately carry both ln_affine and bias.

Checkpoints are a deterministic single-file container (header JSON + raw
little-endian arrays) so identical training runs produce identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

CHECKPOINT_MAGIC = b"ACMCKPT1"
CHECKPOINT_FORMAT_VERSION = 1

PARAM_SCHEMES = ("bias_only", "lns", "fe_plus_lns", "full")


class ParameterTag(str, Enum):
    FEATURE_EXTRACTOR = "feature_extractor"
    LN_AFFINE = "ln_affine"
    BIAS = "bias"
    OTHER = "other"


@dataclass
class ModelConfig:
    dim: int = 64
    conv_kernels: tuple[int, ...] = (10, 8, 4)
    conv_strides: tuple[int, ...] = (5, 4, 4)
    num_blocks: int = 2
    ff_hidden: int = 128
    num_classes: int = 12
    blank_index: int = 0
    sample_rate: int = 8000
    class_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.conv_kernels) != len(self.conv_strides):
            raise ValueError("conv_kernels and conv_strides must have equal length")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if not 0 <= self.blank_index < self.num_classes:
            raise ValueError("blank_index out of range")
        if self.class_names and len(self.class_names) != self.num_classes:
            raise ValueError("class_names length must equal num_classes")

    def min_input_length(self) -> int:
        """Shortest waveform producing at least one output frame."""
        need = 1
        for k, s in zip(reversed(self.conv_kernels), reversed(self.conv_strides)):
            need = (need - 1) * s + k
        return need

    def output_length(self, num_samples: int) -> int:
        """Number of frames the conv stack yields for a waveform length."""
        n = num_samples
        for k, s in zip(self.conv_kernels, self.conv_strides):
            n = (n - k) // s + 1
        return n


class ConvFeatureExtractor(nn.Module):
    """Strided 1-D conv stack with a final layer norm.

    Accepts (T_samples,) for one waveform or (B, 1, L) padded batches;
    returns (T, d) or (B, T_max, d). Padded tail frames are garbage and
    must be masked downstream.

    The first conv is initialized as a windowed cosine filterbank in
    quadrature pairs (trainable); starting frequency-selective removes the
    long CTC warmup plateau that random kernels cause on this task.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        layers = []
        in_ch = 1
        for k, s in zip(config.conv_kernels, config.conv_strides):
            layers.append(nn.Conv1d(in_ch, config.dim, kernel_size=k, stride=s))
            in_ch = config.dim
        self.convs = nn.ModuleList(layers)
        self.act = nn.GELU()
        self.norm = nn.LayerNorm(config.dim)
        self._init_filterbank(config)

    def _init_filterbank(self, config: ModelConfig) -> None:
        conv = self.convs[0]
        k = conv.weight.shape[2]
        t = torch.arange(k, dtype=torch.float32) - (k - 1) / 2.0
        window = torch.hann_window(k, periodic=False)
        n_pairs = config.dim // 2
        freqs = torch.linspace(0.02, 0.46, n_pairs)  # cycles per sample
        bank = torch.empty(config.dim, 1, k)
        for i in range(n_pairs):
            phase = 2 * math.pi * freqs[i] * t
            bank[2 * i, 0] = torch.cos(phase) * window
            bank[2 * i + 1, 0] = torch.sin(phase) * window
        if config.dim % 2:
            bank[-1, 0] = window / window.sum()
        with torch.no_grad():
            conv.weight.copy_(bank * (2.0 / k))
            conv.bias.zero_()

    def forward(self, waveform: torch.Tensor) -> torch.Tensor:
        single = waveform.ndim == 1
        x = waveform.view(1, 1, -1) if single else waveform
        for conv in self.convs:
            x = self.act(conv(x))
        x = x.transpose(1, 2)  # (B, T, d)
        x = self.norm(x)
        return x.squeeze(0) if single else x


class SelfAttention(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        self.scale = 1.0 / math.sqrt(dim)

    def forward(self, x: torch.Tensor, key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        scores = self.q(x) @ self.k(x).transpose(-2, -1) * self.scale
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask.unsqueeze(-2), float("-inf"))
        return self.out(torch.softmax(scores, dim=-1) @ self.v(x))


class EncoderBlock(nn.Module):
    """Pre-LN transformer block: x + attn(ln1(x)), then x + mlp(ln2(x))."""

    def __init__(self, dim: int, ff_hidden: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, ff_hidden), nn.GELU(), nn.Linear(ff_hidden, dim)
        )

    def forward(self, x: torch.Tensor, key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), key_mask)
        x = x + self.mlp(self.ln2(x))
        return x


class Encoder(nn.Module):
    """Transformer blocks + final LN + linear head; features -> logits."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            EncoderBlock(config.dim, config.ff_hidden) for _ in range(config.num_blocks)
        )
        self.norm = nn.LayerNorm(config.dim)
        self.head = nn.Linear(config.dim, config.num_classes)

    def forward(self, features: torch.Tensor,
                key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = features
        for block in self.blocks:
            x = block(x, key_mask)
        return self.head(self.norm(x))


class ToyAcousticModel(nn.Module):
    """Full model; forward returns (features, logits) for one waveform."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.feature_extractor = ConvFeatureExtractor(config)
        self.encoder = Encoder(config)

    # -- forward ---------------------------------------------------------

    def _check_waveform(self, waveform: torch.Tensor) -> torch.Tensor:
        if not isinstance(waveform, torch.Tensor):
            waveform = torch.as_tensor(waveform)
        if waveform.ndim != 1 or waveform.numel() == 0:
            raise ValueError("waveform must be a non-empty 1-D sample vector")
        if not torch.isfinite(waveform).all():
            raise ValueError("waveform contains non-finite samples")
        need = self.config.min_input_length()
        if waveform.numel() < need:
            raise ValueError(
                f"waveform shorter than one receptive field ({waveform.numel()} < {need})"
            )
        return waveform.to(next(self.parameters()).dtype)

    def extract(self, waveform: torch.Tensor) -> torch.Tensor:
        return self.feature_extractor(self._check_waveform(waveform))

    def encode(self, features: torch.Tensor) -> torch.Tensor:
        return self.encoder(features)

    def forward(self, waveform: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.extract(waveform)
        return features, self.encode(features)

    def forward_batch(
        self, waveforms: Sequence[torch.Tensor]
    ) -> list[tuple[torch.Tensor, torch.Tensor]]:
        """Padded batch forward; returns per-sample (features, logits) cut
        to each sample's true frame count. Padding keys are masked out of
        attention, so valid frames match the unbatched forward up to
        reduction order."""
        waves = [self._check_waveform(w) for w in waveforms]
        lengths = [w.numel() for w in waves]
        frame_counts = [self.config.output_length(n) for n in lengths]
        padded = torch.zeros(len(waves), 1, max(lengths), dtype=waves[0].dtype)
        for i, w in enumerate(waves):
            padded[i, 0, : w.numel()] = w
        features = self.feature_extractor(padded)
        key_mask = torch.zeros(features.shape[0], features.shape[1], dtype=torch.bool)
        for i, t in enumerate(frame_counts):
            key_mask[i, :t] = True
        logits = self.encoder(features, key_mask)
        return [
            (features[i, : frame_counts[i]], logits[i, : frame_counts[i]])
            for i in range(len(waves))
        ]

    # -- metadata --------------------------------------------------------

    @property
    def blank_index(self) -> int:
        return self.config.blank_index

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.config.class_names

    @property
    def word_map(self) -> list[Optional[str]]:
        """Class -> word; <...>-style names (blank, separator) emit nothing."""
        if not self.config.class_names:
            raise ValueError("model has no class names attached")
        return [None if n.startswith("<") else n for n in self.config.class_names]

    def clone(self) -> "ToyAcousticModel":
        other = ToyAcousticModel(self.config)
        other.load_state_dict(self.state_dict())
        return other


def build_model(config: ModelConfig, seed: int = 0) -> ToyAcousticModel:
    """Construct with seeded, reproducible initialization."""
    torch.manual_seed(seed)
    return ToyAcousticModel(config)


# -- parameter groups ------------------------------------------------------


def parameter_tags(model: nn.Module) -> dict[str, frozenset[ParameterTag]]:
    """Tag every trainable tensor; LN shifts carry both ln_affine and bias."""
    ln_params = set()
    for mod_name, mod in model.named_modules():
        if isinstance(mod, nn.LayerNorm):
            for pn, _ in mod.named_parameters(recurse=False):
                ln_params.add(f"{mod_name}.{pn}" if mod_name else pn)
    tags: dict[str, frozenset[ParameterTag]] = {}
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        t = set()
        if name.startswith("feature_extractor."):
            t.add(ParameterTag.FEATURE_EXTRACTOR)
        if name in ln_params:
            t.add(ParameterTag.LN_AFFINE)
        if name.endswith(".bias"):
            t.add(ParameterTag.BIAS)
        if not t:
            t.add(ParameterTag.OTHER)
        tags[name] = frozenset(t)
    return tags


def select_parameters(model: nn.Module, scheme: str) -> list[tuple[str, nn.Parameter]]:
    """Named parameters for an adaptation scheme, in registration order."""
    if scheme not in PARAM_SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {PARAM_SCHEMES}")
    tags = parameter_tags(model)
    selected = []
    for name, param in model.named_parameters():
        t = tags.get(name)
        if t is None:
            continue
        keep = (
            scheme == "full"
            or (scheme == "bias_only" and ParameterTag.BIAS in t)
            or (scheme == "lns" and ParameterTag.LN_AFFINE in t)
            or (scheme == "fe_plus_lns"
                and (ParameterTag.FEATURE_EXTRACTOR in t or ParameterTag.LN_AFFINE in t))
        )
        if keep:
            selected.append((name, param))
    if not selected:
        raise ValueError(f"scheme {scheme!r} selected no parameters")
    return selected


# -- snapshot / restore ----------------------------------------------------


@dataclass
class Checkpoint:
    """In-memory snapshot of all trainable values plus optimizer state."""

    params: dict[str, torch.Tensor]
    optimizer_state: Optional[dict] = None


def snapshot(model: nn.Module, optimizer: Optional[torch.optim.Optimizer] = None) -> Checkpoint:
    params = {name: p.detach().clone() for name, p in model.named_parameters()}
    opt_state = None
    if optimizer is not None:
        opt_state = {
            k: (v.detach().clone() if isinstance(v, torch.Tensor) else v)
            for k, v in optimizer.state_dict().items()
        }
    return Checkpoint(params=params, optimizer_state=opt_state)


def restore(model: nn.Module, checkpoint: Checkpoint,
            optimizer: Optional[torch.optim.Optimizer] = None) -> None:
    """Copy snapshotted values back in place; bit-exact for forwards."""
    current = dict(model.named_parameters())
    if set(current) != set(checkpoint.params):
        raise ValueError("checkpoint does not match model architecture (parameter names differ)")
    with torch.no_grad():
        for name, saved in checkpoint.params.items():
            if current[name].shape != saved.shape:
                raise ValueError(
                    f"checkpoint does not match model architecture (shape of {name} differs)"
                )
            current[name].copy_(saved)
    if optimizer is not None and checkpoint.optimizer_state is not None:
        optimizer.load_state_dict(checkpoint.optimizer_state)


# -- checkpoint files ------------------------------------------------------


def save_checkpoint(path, model: ToyAcousticModel) -> None:
    """Write a deterministic single-file checkpoint (header + raw arrays)."""
    entries = []
    blobs = []
    offset = 0
    for name, param in model.named_parameters():
        arr = np.ascontiguousarray(param.detach().cpu().numpy())
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": asdict(model.config),
        "params": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> ToyAcousticModel:
    """Rebuild the model from a checkpoint file; bit-exact round trip."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a model checkpoint")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {header.get('format_version')}")
        arch = dict(header["arch"])
        for key in ("conv_kernels", "conv_strides", "class_names"):
            arch[key] = tuple(arch[key])
        config = ModelConfig(**arch)
        model = build_model(config, seed=0)
        current = dict(model.named_parameters())
        stored_names = [e["name"] for e in header["params"]]
        if set(stored_names) != set(current):
            raise ValueError("checkpoint does not match model architecture")
        body = fh.read()
    with torch.no_grad():
        for entry in header["params"]:
            raw = body[entry["offset"]: entry["offset"] + entry["nbytes"]]
            arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
            current[entry["name"]].copy_(torch.from_numpy(arr.copy()))
    return model
