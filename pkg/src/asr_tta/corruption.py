"""Test-set corruption: additive Gaussian noise and SNR-controlled mixing.

Both operations are pure and seeded. No clipping or re-normalization is
applied after mixing, so the requested SNR holds exactly by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

GAUSSIAN_AMPLITUDES = (0.005, 0.01, 0.015, 0.02, 0.03)
SNR_LEVELS_DB = (10.0, 5.0, 0.0, -5.0, -10.0)


@dataclass
class CorruptionSpec:
    """One corruption recipe: either Gaussian at amplitude delta or an
    SNR-controlled mix of a named noise source."""

    kind: str  # "gaussian" | "snr_mix"
    gaussian_amplitude: Optional[float] = None
    snr_db: Optional[float] = None
    noise_source: Optional[str] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind == "gaussian":
            if self.gaussian_amplitude is None or self.snr_db is not None:
                raise ValueError("gaussian corruption takes gaussian_amplitude only")
            if self.gaussian_amplitude < 0:
                raise ValueError("gaussian_amplitude must be >= 0")
        elif self.kind == "snr_mix":
            if self.snr_db is None or self.gaussian_amplitude is not None:
                raise ValueError("snr_mix corruption takes snr_db only")
            if not self.noise_source:
                raise ValueError("snr_mix needs a noise_source")
        else:
            raise ValueError(f"unknown corruption kind {self.kind!r}")

    def label(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian_{self.gaussian_amplitude:g}"
        return f"snr_{self.snr_db:g}dB_{self.noise_source}"


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x.astype(np.float64)))))


def gaussian_corrupt(clean: np.ndarray, delta: float, seed: int) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation delta; no clipping.

    delta = 0 returns the input bit-exactly.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if delta == 0:
        return np.array(clean, copy=True)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(clean))
    out = clean.astype(np.float64) + delta * noise
    return out.astype(clean.dtype if clean.dtype.kind == "f" else np.float64)


def fit_noise_segment(noise: np.ndarray, length: int, seed: int) -> np.ndarray:
    """Tile noise shorter than `length`; seeded random crop if longer."""
    if len(noise) == 0:
        raise ValueError("noise waveform is empty")
    if len(noise) < length:
        reps = int(np.ceil(length / len(noise)))
        return np.tile(noise, reps)[:length]
    if len(noise) > length:
        rng = np.random.default_rng(seed)
        start = int(rng.integers(0, len(noise) - length + 1))
        return noise[start: start + length]
    return noise.copy()


def snr_mix(
    clean: np.ndarray,
    noise: np.ndarray,
    snr_db: float,
    seed: int,
    return_components: bool = False,
):
    """Mix noise into clean at an exact signal-to-noise ratio (dB on RMS).

    Returns the mixed waveform, or (mixed, scaled_noise_segment) when
    return_components is set so the achieved SNR can be re-measured.
    """
    clean64 = clean.astype(np.float64)
    segment = fit_noise_segment(noise.astype(np.float64), len(clean64), seed)
    clean_rms = rms(clean64)
    seg_rms = rms(segment)
    if clean_rms == 0:
        raise ValueError("clean waveform has zero RMS")
    if seg_rms == 0:
        raise ValueError("noise segment has zero RMS")
    gain = clean_rms / (seg_rms * 10.0 ** (snr_db / 20.0))
    scaled = gain * segment
    mixed = clean64 + scaled
    if return_components:
        return mixed, scaled
    return mixed


def measure_snr_db(clean: np.ndarray, noise_component: np.ndarray) -> float:
    """Achieved SNR from the stored clean and scaled-noise components."""
    return 20.0 * np.log10(rms(clean) / rms(noise_component))


def synthetic_noise(length: int, seed: int, kind: str = "white") -> np.ndarray:
    """Noise sources for the desk-scale harness (no external files needed)."""
    rng = np.random.default_rng(seed)
    if kind == "white":
        return rng.standard_normal(length)
    if kind == "hum":
        # low-frequency hum plus a little broadband noise
        t = np.arange(length, dtype=np.float64)
        wave = np.sin(2 * np.pi * 0.011 * t) + 0.5 * np.sin(2 * np.pi * 0.023 * t + 1.3)
        return wave + 0.2 * rng.standard_normal(length)
    raise ValueError(f"unknown synthetic noise kind {kind!r}")


def apply_corruption(clean: np.ndarray, spec: CorruptionSpec,
                     noise: Optional[np.ndarray] = None):
    """Dispatch one CorruptionSpec; returns (corrupted, metadata dict)."""
    if spec.kind == "gaussian":
        out = gaussian_corrupt(clean, spec.gaussian_amplitude, spec.seed)
        meta = {"kind": "gaussian", "delta": spec.gaussian_amplitude, "seed": spec.seed}
        return out, meta
    if noise is None:
        raise ValueError("snr_mix corruption needs a noise waveform")
    mixed, scaled = snr_mix(clean, noise, spec.snr_db, spec.seed, return_components=True)
    meta = {
        "kind": "snr_mix",
        "snr_db": spec.snr_db,
        "noise_source": spec.noise_source,
        "seed": spec.seed,
        "measured_snr_db": measure_snr_db(clean, scaled),
    }
    return mixed, meta
