"""Desk-scale synthetic speech task.

Utterances are sequences of fixed-length tone "syllables" (one word per
token) separated by longer silence gaps, with short silence at the edges.
The class inventory is C = blank + (C-2) tone tokens + 1 word-separator
class. The separator exists so the inventory mirrors real CTC vocabs that
carry non-lexical symbols; it renders as the longer inter-word gap and is
kept out of CTC targets, so silence aligns to blank and the blank-as-silence
heuristic stays meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

TOKEN_NAMES = ("da", "di", "du", "de", "do", "ka", "ki", "ku", "ke", "ko")


@dataclass
class ToyTaskSpec:
    """Configuration of the synthetic corpus generator.

    num_classes counts blank + content tokens + separator. Tone frequencies
    are spread linearly below Nyquist; per-token amplitudes are drawn from
    amp_range before the whole waveform is peak-normalized to 1, so quiet
    tokens set the sensitivity to additive noise.
    """

    num_classes: int = 12
    sample_rate: int = 8000
    template_len: int = 480
    gap_range: tuple[int, int] = (240, 560)
    edge_silence_range: tuple[int, int] = (160, 320)
    token_count_range: tuple[int, int] = (3, 6)
    amp_range: tuple[float, float] = (0.35, 1.0)
    noise_floor_range: tuple[float, float] = (0.002, 0.03)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 4:
            raise ValueError("need at least blank + separator + 2 content tokens")
        if self.num_tokens > len(TOKEN_NAMES):
            raise ValueError(f"at most {len(TOKEN_NAMES)} content tokens supported")
        if self.token_count_range[0] < 1 or self.token_count_range[0] > self.token_count_range[1]:
            raise ValueError("token_count_range must be a non-empty range with low >= 1")
        if self.gap_range[0] < 0 or self.gap_range[0] > self.gap_range[1]:
            raise ValueError("gap_range must be non-negative and ordered")
        if self.template_len <= 0 or self.sample_rate <= 0:
            raise ValueError("template_len and sample_rate must be positive")
        if not 0 < self.amp_range[0] <= self.amp_range[1]:
            raise ValueError("amp_range must be positive and ordered")
        if not 0 <= self.noise_floor_range[0] <= self.noise_floor_range[1]:
            raise ValueError("noise_floor_range must be non-negative and ordered")

    @property
    def blank_index(self) -> int:
        return 0

    @property
    def separator_index(self) -> int:
        return self.num_classes - 1

    @property
    def num_tokens(self) -> int:
        """Number of content (tone) classes."""
        return self.num_classes - 2

    @property
    def content_ids(self) -> range:
        return range(1, 1 + self.num_tokens)

    def class_names(self) -> list[str]:
        names = ["<blank>"]
        names += list(TOKEN_NAMES[: self.num_tokens])
        names.append("<sep>")
        return names

    def word_map(self) -> list[Optional[str]]:
        """Class index -> emitted word (None for blank and separator)."""
        wm: list[Optional[str]] = [None]
        wm += list(TOKEN_NAMES[: self.num_tokens])
        wm.append(None)
        return wm

    def token_band(self, class_id: int) -> tuple[float, float]:
        """Frequency band per content class. Classes are spectral bands
        rather than single lines so the strided conv front end separates
        them by band energy (single tones can alias to near-static patterns
        at unlucky stride/frequency combinations). Neighboring bands
        overlap ~30% so additive noise yields class confusion between
        neighbors, the way real acoustic corruption confuses phones."""
        if class_id not in self.content_ids:
            raise ValueError(f"class {class_id} is not a content token")
        lo_edge = 0.0375 * self.sample_rate
        hi_edge = 0.45 * self.sample_rate
        slot = (hi_edge - lo_edge) / (self.num_tokens + 0.4)
        lo = lo_edge + (class_id - 1) * slot
        return lo, lo + 1.4 * slot

    def token_frequency(self, class_id: int) -> float:
        """Center frequency of the class band."""
        lo, hi = self.token_band(class_id)
        return 0.5 * (lo + hi)

    def template(self, class_id: int) -> np.ndarray:
        """Unit-peak narrowband prototype: a fixed-phase multisine filling
        the class band, faded at the edges to avoid clicks. Deterministic
        per class (phases come from a class-seeded generator)."""
        n = self.template_len
        lo, hi = self.token_band(class_id)
        t = np.arange(n, dtype=np.float64) / self.sample_rate
        rng = np.random.default_rng(1000 + class_id)
        freqs = np.linspace(lo, hi, 7)
        phases = rng.uniform(0, 2 * np.pi, size=freqs.size)
        tone = np.zeros(n, dtype=np.float64)
        for f, ph in zip(freqs, phases):
            tone += np.sin(2.0 * np.pi * f * t + ph)
        fade = max(8, n // 16)
        env = np.ones(n, dtype=np.float64)
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        env[:fade] = ramp
        env[-fade:] = ramp[::-1]
        tone = tone * env
        return tone / np.max(np.abs(tone))

    def ids_for_words(self, words: Sequence[str]) -> list[int]:
        name_to_id = {name: i for i, name in enumerate(self.class_names())}
        try:
            return [name_to_id[w] for w in words]
        except KeyError as exc:
            raise ValueError(f"unknown token name {exc.args[0]!r}") from exc


@dataclass
class Utterance:
    """Mono waveform plus its reference transcript: the unit of adaptation."""

    waveform: np.ndarray
    transcript: str
    sample_rate: int
    utt_id: str = ""

    def reference_words(self) -> list[str]:
        return self.transcript.lower().split()


def render_tokens(
    task: ToyTaskSpec,
    token_ids: Sequence[int],
    gap_lengths: Sequence[int],
    edge_lengths: tuple[int, int],
    amplitudes: Sequence[float],
) -> np.ndarray:
    """Deterministically assemble a waveform from explicit layout choices.

    Layout: lead silence, then tokens separated by the given gaps, then
    trail silence. Peak-normalized to 1.
    """
    if len(token_ids) == 0:
        raise ValueError("token sequence must be non-empty")
    if len(gap_lengths) != len(token_ids) - 1:
        raise ValueError("need exactly len(tokens) - 1 gaps")
    if len(amplitudes) != len(token_ids):
        raise ValueError("need one amplitude per token")
    pieces = [np.zeros(edge_lengths[0], dtype=np.float64)]
    for i, cid in enumerate(token_ids):
        pieces.append(amplitudes[i] * task.template(cid))
        if i < len(gap_lengths):
            pieces.append(np.zeros(gap_lengths[i], dtype=np.float64))
    pieces.append(np.zeros(edge_lengths[1], dtype=np.float64))
    wave = np.concatenate(pieces)
    peak = np.max(np.abs(wave))
    if peak > 0:
        wave = wave / peak
    return wave.astype(np.float32)


def generate_toy_utterance(task: ToyTaskSpec, rng_seed: int, utt_id: str = "") -> Utterance:
    """Sample one utterance; deterministic given the seed.

    A small per-utterance noise floor (dithering) is added after peak
    normalization, as in any real recording; without it the model only
    ever sees bit-exact silence and hallucinates on noisy gaps.
    """
    rng = np.random.default_rng(rng_seed)
    count = int(rng.integers(task.token_count_range[0], task.token_count_range[1] + 1))
    token_ids = [int(c) for c in rng.choice(list(task.content_ids), size=count)]
    gaps = [int(g) for g in rng.integers(task.gap_range[0], task.gap_range[1] + 1,
                                         size=max(count - 1, 0))]
    edges = (
        int(rng.integers(task.edge_silence_range[0], task.edge_silence_range[1] + 1)),
        int(rng.integers(task.edge_silence_range[0], task.edge_silence_range[1] + 1)),
    )
    amps = rng.uniform(task.amp_range[0], task.amp_range[1], size=count).tolist()
    wave = render_tokens(task, token_ids, gaps, edges, amps).astype(np.float64)
    floor = rng.uniform(task.noise_floor_range[0], task.noise_floor_range[1])
    if floor > 0:
        wave = wave + floor * rng.standard_normal(len(wave))
    names = task.class_names()
    transcript = " ".join(names[c] for c in token_ids)
    return Utterance(waveform=wave.astype(np.float32), transcript=transcript,
                     sample_rate=task.sample_rate, utt_id=utt_id)


def generate_corpus(task: ToyTaskSpec, size: int, seed: int) -> list[Utterance]:
    """Generate `size` utterances with per-utterance child seeds."""
    rng = np.random.default_rng(seed)
    child_seeds = rng.integers(0, 2**63 - 1, size=size)
    return [
        generate_toy_utterance(task, int(child_seeds[i]), utt_id=f"utt{i:05d}")
        for i in range(size)
    ]
