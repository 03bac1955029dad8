"""Command-line harness tying the modules into reproducible experiments.

Subcommands: train-toy, corrupt, adapt, evaluate, analyze-entropy.
Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import audio_io
from .adapt import aggregate_steps, run_episodic
from .baselines import method_runner
from .config import (
    ConfigError,
    ExperimentConfig,
    ManifestEntry,
    dump_config,
    load_config,
    read_manifest,
    write_manifest,
)
from .corruption import apply_corruption, synthetic_noise
from .model import load_checkpoint, save_checkpoint
from .seeds import derive_seed
from .toytask import Utterance, generate_corpus
from .train import evaluate_model_wer, train_reference_model

log = logging.getLogger("asr_tta")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "out", None):
        config.out_dir = args.out
    if getattr(args, "method", None):
        config.methods = [args.method]
    if getattr(args, "checkpoint", None):
        config.checkpoint = args.checkpoint
    if getattr(args, "manifest", None):
        config.manifest = args.manifest
    return config


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_utterances(entries: list[ManifestEntry]) -> list[Utterance]:
    utts = []
    for entry in entries:
        wave, sr = audio_io.read_wav(entry.audio)
        utts.append(Utterance(waveform=wave, transcript=entry.transcript,
                              sample_rate=sr, utt_id=Path(entry.audio).stem))
    return utts


# -- train-toy ---------------------------------------------------------------


def cmd_train_toy(args) -> int:
    config = _resolve_config(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "config.json")

    model, report = train_reference_model(
        config.toy_task,
        train_size=config.train.train_size,
        epochs=config.train.epochs,
        seed=config.seed,
        holdout_size=config.train.holdout_size,
        batch_size=config.train.batch_size,
        lr=config.train.lr,
        target_wer=config.train.target_wer,
        confidence_penalty=config.train.confidence_penalty,
    )
    ckpt_path = out / "model.ckpt"
    save_checkpoint(ckpt_path, model)
    _write_json(out / "train_report.json", report)

    # clean eval corpus for downstream corruption and adaptation
    eval_dir = out / "eval"
    utts = generate_corpus(config.toy_task, config.eval_corpus_size,
                           derive_seed(config.seed, "eval-corpus"))
    entries = []
    for utt in utts:
        wav_path = eval_dir / f"{utt.utt_id}.wav"
        audio_io.write_wav(wav_path, utt.waveform, utt.sample_rate)
        entries.append(ManifestEntry(audio=str(wav_path), transcript=utt.transcript))
    write_manifest(eval_dir / "manifest.jsonl", entries)

    print(f"checkpoint: {ckpt_path}")
    print(f"clean WER on {config.train.holdout_size} held-out utterances: "
          f"{report['clean_wer']:.4f} (target {report['target_wer']})")
    if not report["reached_target"]:
        log.error("clean WER target missed: %.4f > %.4f",
                  report["clean_wer"], report["target_wer"])
        return EXIT_RUNTIME
    return EXIT_OK


# -- corrupt -----------------------------------------------------------------


def cmd_corrupt(args) -> int:
    config = _resolve_config(args)
    if not config.manifest:
        raise ConfigError("corrupt needs a manifest (config.manifest or --manifest)")
    entries = read_manifest(config.manifest)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "config.json")

    noise_cache: dict[str, np.ndarray] = {}
    corrupted: list[ManifestEntry] = []
    for spec in config.corruptions:
        label = spec.label()
        for i, entry in enumerate(entries):
            try:
                wave, sr = audio_io.read_wav(entry.audio)
            except Exception as exc:
                log.warning("skipping unreadable audio %s: %s", entry.audio, exc)
                continue
            spec_i = dataclasses.replace(
                spec, seed=derive_seed(config.seed, f"{label}:{Path(entry.audio).stem}"))
            noise = None
            if spec.kind == "snr_mix":
                key = spec.noise_source or "white"
                if key not in noise_cache:
                    noise_cache[key] = _resolve_noise(key, sr, config.seed)
                noise = noise_cache[key]
            out_wave, meta = apply_corruption(wave, spec_i, noise=noise)
            meta["source"] = entry.audio
            wav_path = out / label / f"{Path(entry.audio).stem}.wav"
            audio_io.write_wav(wav_path, out_wave, sr)
            corrupted.append(ManifestEntry(audio=str(wav_path),
                                           transcript=entry.transcript,
                                           corruption=meta))
    write_manifest(out / "manifest.jsonl", corrupted)
    print(f"wrote {len(corrupted)} corrupted files under {out}")
    return EXIT_OK


def _resolve_noise(source: str, sample_rate: int, seed: int) -> np.ndarray:
    """A noise source is a wav path or a builtin synthetic kind."""
    if source in ("white", "hum"):
        return synthetic_noise(10 * sample_rate, derive_seed(seed, f"noise-{source}"),
                               kind=source)
    wave, _ = audio_io.read_wav(source)
    return wave


# -- adapt / evaluate --------------------------------------------------------


def _summary_payload(method: str, result, config: ExperimentConfig) -> dict:
    return {
        "method": method,
        "n_utterances": len(result.reports),
        "n_failed": result.num_failed,
        "wer_before": result.wer_before,
        "wer_after": result.wer_after,
        "werr": result.werr,
        "per_step": [dataclasses.asdict(s) for s in result.per_step],
        "adaptation": dataclasses.asdict(config.adaptation),
        "seed": config.seed,
    }


def cmd_adapt(args) -> int:
    config = _resolve_config(args)
    if not config.checkpoint:
        raise ConfigError("adapt needs a checkpoint (config.checkpoint or --checkpoint)")
    if not config.manifest:
        raise ConfigError("adapt needs a manifest (config.manifest or --manifest)")
    model = load_checkpoint(config.checkpoint)
    entries = read_manifest(config.manifest)
    utterances = _load_utterances(entries)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "config.json")

    for method in config.methods:
        runner = method_runner(method, config.baseline)
        result = run_episodic(model, utterances, config.adaptation,
                              adapt_fn=runner, workers=args.workers)
        method_dir = out / method
        method_dir.mkdir(parents=True, exist_ok=True)
        with open(method_dir / "records.jsonl", "w") as fh:
            for report in result.reports:
                fh.write(json.dumps(dataclasses.asdict(report), sort_keys=True) + "\n")
        _write_json(method_dir / "summary.json",
                    _summary_payload(method, result, config))
        werr_txt = f"{result.werr:.3f}" if result.werr is not None else "n/a"
        print(f"{method}: WER {result.wer_before:.4f} -> {result.wer_after:.4f} "
              f"(WERR {werr_txt}, {result.num_failed} failed)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _resolve_config(args)
    if not config.checkpoint:
        raise ConfigError("evaluate needs a checkpoint (config.checkpoint or --checkpoint)")
    if not config.manifest:
        raise ConfigError("evaluate needs a manifest (config.manifest or --manifest)")
    model = load_checkpoint(config.checkpoint)
    utterances = _load_utterances(read_manifest(config.manifest))
    wer = evaluate_model_wer(model, utterances)
    out = Path(config.out_dir)
    _write_json(out / "evaluate.json",
                {"wer": wer, "n_utterances": len(utterances),
                 "checkpoint": config.checkpoint, "manifest": config.manifest})
    print(f"WER {wer:.4f} over {len(utterances)} utterances")
    return EXIT_OK


# -- analyze-entropy ---------------------------------------------------------


def cmd_analyze_entropy(args) -> int:
    records_path = Path(args.records)
    if not records_path.exists():
        raise ConfigError(f"records file not found: {records_path}")
    from .adapt import StepRecord, UtteranceReport

    reports = []
    with open(records_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            steps = [StepRecord(**s) for s in rec["steps"]]
            rec["steps"] = steps
            reports.append(UtteranceReport(**rec))
    if not reports:
        raise ConfigError(f"no records in {records_path}")

    rows = aggregate_steps(reports, aggregate=args.aggregate)
    header = "step\tstage\tfrac_nonsil_high\tfrac_nonsil_low\tfrac_sil_high\tfrac_sil_low"
    lines = [header]
    for row in rows:
        lines.append(f"{row.step}\t{row.stage}\t{row.frac_nonsil_high:.6f}\t"
                     f"{row.frac_nonsil_low:.6f}\t{row.frac_sil_high:.6f}\t"
                     f"{row.frac_sil_low:.6f}")
    table = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "entropy_table.tsv").write_text(table)
    print(table, end="")
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asr-tta",
        description="Episodic test-time adaptation experiments for CTC acoustic models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--config", default=None, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--checkpoint", default=None, help="model checkpoint path")
        p.add_argument("--manifest", default=None, help="manifest JSONL path")
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="parallel workers (one model clone each)")

    p = sub.add_parser("train-toy", help="train the reference model and emit a clean eval corpus")
    common(p)
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("corrupt", help="apply the configured corruption sweep to a manifest")
    common(p)
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("adapt", help="run adaptation methods over a manifest")
    common(p, workers=True)
    p.add_argument("--method", default=None, help="run a single method by name")
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("evaluate", help="decode a manifest with a checkpoint (no adaptation)")
    common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("analyze-entropy", help="per-step entropy bucket table from adapt records")
    p.add_argument("--records", required=True, help="records.jsonl from an adapt run")
    p.add_argument("--out", default=None, help="directory for entropy_table.tsv")
    p.add_argument("--aggregate", default="pooled", choices=("pooled", "per_utterance"))
    p.set_defaults(fn=cmd_analyze_entropy)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    # single-threaded torch: ~2x faster at these tensor sizes and keeps
    # runs bit-reproducible regardless of core count
    torch.set_num_threads(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
