import hashlib
from pathlib import Path

import pytest
import torch

torch.set_num_threads(1)

from asr_tta.corruption import gaussian_corrupt
from asr_tta.model import load_checkpoint, save_checkpoint
from asr_tta.seeds import derive_seed
from asr_tta.toytask import ToyTaskSpec, Utterance, generate_corpus
from asr_tta.train import train_reference_model

CACHE_DIR = Path(__file__).parent / ".cache"

# reference training recipe pinned for the acceptance suite
PINNED_SEED = 0
ACCEPTANCE_DELTA = 0.1


@pytest.fixture(scope="session")
def task() -> ToyTaskSpec:
    return ToyTaskSpec()


@pytest.fixture(scope="session")
def trained_model(task):
    """Reference model at the pinned seed; cached on disk across runs."""
    key = hashlib.sha256(f"v1:{task!r}:{PINNED_SEED}".encode()).hexdigest()[:16]
    path = CACHE_DIR / f"model_{key}.ckpt"
    if path.exists():
        return load_checkpoint(path)
    model, report = train_reference_model(task, seed=PINNED_SEED)
    assert report["clean_wer"] <= report["target_wer"], (
        f"reference training missed its clean-WER target: {report['clean_wer']:.4f}"
    )
    CACHE_DIR.mkdir(exist_ok=True)
    save_checkpoint(path, model)
    return model


@pytest.fixture(scope="session")
def eval_corpus(task):
    return generate_corpus(task, 100, derive_seed(PINNED_SEED, "eval-corpus"))


@pytest.fixture(scope="session")
def noisy_corpus(eval_corpus):
    """The pinned acceptance corpus: gaussian noise, per-utterance seeds."""
    return [
        Utterance(
            gaussian_corrupt(u.waveform, ACCEPTANCE_DELTA,
                             derive_seed(PINNED_SEED, f"noise:{u.utt_id}")),
            u.transcript, u.sample_rate, u.utt_id,
        )
        for u in eval_corpus
    ]
