#!/usr/bin/env python3
"""Source vs adapted WER across the five Gaussian severity levels
(Table-1-style sweep on the toy task).

Usage:
    python scripts/severity_sweep.py [--checkpoint runs/desk/train/model.ckpt]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import torch

torch.set_num_threads(1)

from asr_tta.adapt import AdaptationConfig, run_episodic
from asr_tta.baselines import method_runner
from asr_tta.corruption import GAUSSIAN_AMPLITUDES, gaussian_corrupt
from asr_tta.model import load_checkpoint
from asr_tta.seeds import derive_seed
from asr_tta.toytask import ToyTaskSpec, Utterance, generate_corpus
from asr_tta.train import evaluate_model_wer, train_reference_model


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--checkpoint", default=None,
                        help="reuse a trained checkpoint instead of retraining")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--corpus-size", type=int, default=100)
    parser.add_argument("--adapt", action="store_true",
                        help="also run the full adaptation method per level")
    args = parser.parse_args()

    task = ToyTaskSpec()
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        model, report = train_reference_model(task, seed=args.seed)
        print(f"trained reference model, clean WER {report['clean_wer']:.4f}")

    corpus = generate_corpus(task, args.corpus_size,
                             derive_seed(args.seed, "eval-corpus"))
    config = AdaptationConfig(lr_ln=2.4e-3, lr_fe=2e-4)
    runner = method_runner("ours")

    print(f"{'delta':>8} {'source':>8}" + (f" {'adapted':>8} {'WERR':>8}" if args.adapt else ""))
    for delta in (0.0,) + GAUSSIAN_AMPLITUDES:
        noisy = [
            Utterance(gaussian_corrupt(u.waveform, delta,
                                       derive_seed(args.seed, f"noise:{u.utt_id}")),
                      u.transcript, u.sample_rate, u.utt_id)
            for u in corpus
        ]
        source = evaluate_model_wer(model, noisy)
        line = f"{delta:8.3f} {source:8.4f}"
        if args.adapt:
            result = run_episodic(model, noisy, config, adapt_fn=runner)
            rel = result.werr if result.werr is not None else float("nan")
            line += f" {result.wer_after:8.4f} {rel:8.3f}"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
