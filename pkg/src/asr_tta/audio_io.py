"""Mono waveform file IO: 16-bit PCM and 32-bit float WAV containers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile


def write_wav(path, waveform: np.ndarray, sample_rate: int, fmt: str = "float32") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "float32":
        wavfile.write(path, sample_rate, np.asarray(waveform, dtype=np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(np.asarray(waveform, dtype=np.float64), -1.0, 1.0)
        wavfile.write(path, sample_rate, (clipped * 32767.0).astype(np.int16))
    else:
        raise ValueError(f"unknown wav format {fmt!r}")


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono WAV; PCM16 is scaled to float32 in [-1, 1)."""
    sample_rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path} is not mono")
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float32)
    else:
        raise ValueError(f"unsupported sample dtype {data.dtype} in {path}")
    return data, int(sample_rate)
