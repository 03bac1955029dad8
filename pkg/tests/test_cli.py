import json
from pathlib import Path

import numpy as np
import pytest

from asr_tta import audio_io
from asr_tta.cli import main

TINY_CONFIG = {
    "seed": 0,
    "eval_corpus_size": 5,
    "toy_task": {"token_count_range": [2, 4]},
    "train": {"train_size": 60, "epochs": 2, "holdout_size": 20,
              "target_wer": 1.1, "batch_size": 12},
    "corruptions": [
        {"kind": "gaussian", "gaussian_amplitude": 0.0},
        {"kind": "gaussian", "gaussian_amplitude": 0.05},
        {"kind": "snr_mix", "snr_db": 5.0, "noise_source": "white"},
    ],
    "adaptation": {"steps_stage1": 1, "steps_stage2": 1,
                   "lr_ln": 1e-3, "lr_fe": 1e-4},
    "methods": ["source", "ours"],
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One tiny end-to-end run shared by the CLI assertions."""
    root = tmp_path_factory.mktemp("cli")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(TINY_CONFIG))

    train_dir = root / "train"
    rc = main(["train-toy", "--config", str(config_path), "--out", str(train_dir)])
    assert rc == 0

    corrupt_dir = root / "corrupt"
    rc = main(["corrupt", "--config", str(config_path),
               "--manifest", str(train_dir / "eval" / "manifest.jsonl"),
               "--out", str(corrupt_dir)])
    assert rc == 0

    adapt_dir = root / "adapt"
    rc = main(["adapt", "--config", str(config_path),
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--manifest", str(corrupt_dir / "manifest.jsonl"),
               "--out", str(adapt_dir)])
    assert rc == 0
    return root, config_path, train_dir, corrupt_dir, adapt_dir


def test_train_outputs(pipeline):
    _, _, train_dir, _, _ = pipeline
    assert (train_dir / "model.ckpt").exists()
    assert (train_dir / "config.json").exists()
    report = json.loads((train_dir / "train_report.json").read_text())
    assert "clean_wer" in report
    manifest_lines = (train_dir / "eval" / "manifest.jsonl").read_text().splitlines()
    assert len(manifest_lines) == 5


def test_corrupt_outputs(pipeline):
    _, _, _, corrupt_dir, _ = pipeline
    lines = [json.loads(l) for l in
             (corrupt_dir / "manifest.jsonl").read_text().splitlines()]
    assert len(lines) == 3 * 5  # three corruption specs x five utterances
    snr_records = [l for l in lines if l["corruption"]["kind"] == "snr_mix"]
    assert snr_records
    for rec in snr_records:
        assert rec["corruption"]["measured_snr_db"] == pytest.approx(5.0, abs=0.01)


def test_corrupt_delta_zero_is_identity(pipeline):
    _, _, train_dir, corrupt_dir, _ = pipeline
    originals = [json.loads(l) for l in
                 (train_dir / "eval" / "manifest.jsonl").read_text().splitlines()]
    corrupted = [json.loads(l) for l in
                 (corrupt_dir / "manifest.jsonl").read_text().splitlines()]
    zero = [l for l in corrupted if l["corruption"].get("delta") == 0.0]
    assert len(zero) == 5
    by_stem = {Path(o["audio"]).stem: o["audio"] for o in originals}
    for rec in zero:
        stem = Path(rec["audio"]).stem
        a, _ = audio_io.read_wav(by_stem[stem])
        b, _ = audio_io.read_wav(rec["audio"])
        assert np.array_equal(a, b)


def test_adapt_outputs(pipeline):
    _, _, _, _, adapt_dir = pipeline
    for method in ("source", "ours"):
        summary = json.loads((adapt_dir / method / "summary.json").read_text())
        records = (adapt_dir / method / "records.jsonl").read_text().splitlines()
        assert summary["n_utterances"] == 15
        assert len(records) == 15
        if method == "source":
            assert summary["wer_after"] == summary["wer_before"]
            assert summary["per_step"] == []
        else:
            assert len(summary["per_step"]) == 2
            for row in summary["per_step"]:
                total = (row["frac_nonsil_high"] + row["frac_nonsil_low"]
                         + row["frac_sil_high"] + row["frac_sil_low"])
                assert total == pytest.approx(1.0, abs=1e-9)


def test_evaluate(pipeline):
    root, config_path, train_dir, corrupt_dir, _ = pipeline
    out = root / "evaluate"
    rc = main(["evaluate", "--config", str(config_path),
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--manifest", str(corrupt_dir / "manifest.jsonl"),
               "--out", str(out)])
    assert rc == 0
    payload = json.loads((out / "evaluate.json").read_text())
    assert 0 <= payload["wer"]
    assert payload["n_utterances"] == 15


def test_analyze_entropy(pipeline):
    root, _, _, _, adapt_dir = pipeline
    out = root / "analysis"
    rc = main(["analyze-entropy", "--records", str(adapt_dir / "ours" / "records.jsonl"),
               "--out", str(out)])
    assert rc == 0
    rows = (out / "entropy_table.tsv").read_text().splitlines()
    assert rows[0].startswith("step\tstage")
    assert len(rows) == 1 + 2  # header + one row per adaptation step
    for row in rows[1:]:
        fields = row.split("\t")
        fractions = [float(x) for x in fields[2:]]
        assert sum(fractions) == pytest.approx(1.0, abs=1e-6)


def test_analyze_entropy_missing_records_is_config_error(tmp_path):
    assert main(["analyze-entropy", "--records", str(tmp_path / "none.jsonl")]) == 1


def test_bad_config_is_exit_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"methods": ["sgem"]}))
    assert main(["train-toy", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_adapt_needs_checkpoint(tmp_path):
    assert main(["adapt", "--manifest", "/nope.jsonl", "--out", str(tmp_path)]) == 1


def test_missed_wer_target_is_exit_two(tmp_path):
    cfg = dict(TINY_CONFIG)
    cfg["train"] = dict(cfg["train"], train_size=40, epochs=1, target_wer=0.0001)
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(cfg))
    rc = main(["train-toy", "--config", str(config_path), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert (tmp_path / "o" / "model.ckpt").exists()  # diagnostics still written


def test_garbage_checkpoint_is_exit_two(pipeline, tmp_path):
    _, config_path, _, corrupt_dir, _ = pipeline
    fake = tmp_path / "fake.ckpt"
    fake.write_bytes(b"definitely not a checkpoint")
    rc = main(["adapt", "--config", str(config_path),
               "--checkpoint", str(fake),
               "--manifest", str(corrupt_dir / "manifest.jsonl"),
               "--out", str(tmp_path / "a")])
    assert rc == 2


def test_corrupt_skips_unreadable_audio(pipeline, tmp_path, caplog):
    root, config_path, train_dir, _, _ = pipeline
    entries = (train_dir / "eval" / "manifest.jsonl").read_text().splitlines()
    broken = tmp_path / "broken.wav"
    broken.write_bytes(b"not audio")
    record = json.dumps({"audio": str(broken), "transcript": "da"})
    manifest = tmp_path / "mixed.jsonl"
    manifest.write_text("\n".join(entries[:2] + [record]) + "\n")
    out = tmp_path / "corrupted"
    rc = main(["corrupt", "--config", str(config_path),
               "--manifest", str(manifest), "--out", str(out)])
    assert rc == 0
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 3 * 2  # three specs x two readable files; broken one skipped


def test_wav_round_trip(tmp_path):
    wave = np.clip(np.random.default_rng(0).standard_normal(512) * 0.4,
                   -1.0, 1.0).astype(np.float32)
    p32 = tmp_path / "f32.wav"
    audio_io.write_wav(p32, wave, 8000, fmt="float32")
    back, sr = audio_io.read_wav(p32)
    assert sr == 8000
    assert np.array_equal(back, wave)
    p16 = tmp_path / "p16.wav"
    audio_io.write_wav(p16, wave, 8000, fmt="pcm16")
    back16, _ = audio_io.read_wav(p16)
    assert np.max(np.abs(back16 - wave)) < 1e-4  # quantization noise only
    with pytest.raises(ValueError):
        audio_io.write_wav(tmp_path / "x.wav", wave, 8000, fmt="mp3")
