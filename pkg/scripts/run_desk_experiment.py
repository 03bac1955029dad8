#!/usr/bin/env python3
"""Full desk-scale experiment: train the reference model, corrupt the eval
corpus, run every adaptation method, and print the WER table plus the
per-step entropy-bucket table for the main method.

Usage:
    python scripts/run_desk_experiment.py [--out runs/desk] [--seed 0]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from asr_tta.cli import main as cli


EXPERIMENT = {
    "seed": 0,
    "eval_corpus_size": 100,
    "corruptions": [{"kind": "gaussian", "gaussian_amplitude": 0.1}],
    "adaptation": {"lr_ln": 2.4e-3, "lr_fe": 2e-4},
    "methods": ["source", "tent", "sar_filter", "teco", "suta_like",
                "ours", "ours_wo_stcr", "ours_wo_cea"],
}


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = dict(EXPERIMENT, seed=args.seed)
    config_path = out / "experiment.json"
    config_path.write_text(json.dumps(config, indent=2))

    steps = [
        ["train-toy", "--config", str(config_path), "--out", str(out / "train")],
        ["corrupt", "--config", str(config_path),
         "--manifest", str(out / "train/eval/manifest.jsonl"),
         "--out", str(out / "corrupt")],
        ["adapt", "--config", str(config_path),
         "--checkpoint", str(out / "train/model.ckpt"),
         "--manifest", str(out / "corrupt/manifest.jsonl"),
         "--out", str(out / "adapt"), "--workers", str(args.workers)],
        ["analyze-entropy", "--records", str(out / "adapt/ours/records.jsonl"),
         "--out", str(out / "analysis")],
    ]
    for argv in steps:
        rc = cli(argv)
        if rc != 0:
            print(f"step {argv[0]} failed with exit code {rc}", file=sys.stderr)
            return rc

    print("\n== WER summary ==")
    print(f"{'method':<14} {'before':>8} {'after':>8} {'WERR':>8}")
    for method in config["methods"]:
        summary = json.loads((out / "adapt" / method / "summary.json").read_text())
        rel = summary["werr"]
        rel_txt = f"{rel:8.3f}" if rel is not None else "     n/a"
        print(f"{method:<14} {summary['wer_before']:8.4f} "
              f"{summary['wer_after']:8.4f} {rel_txt}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
