import torch

from asr_tta.seeds import derive_seed
from asr_tta.toytask import ToyTaskSpec, generate_corpus
from asr_tta.train import evaluate_model_wer, train_reference_model

TINY = dict(train_size=40, holdout_size=30, batch_size=12, lr=4e-3)


def test_zero_epochs_is_near_chance():
    task = ToyTaskSpec()
    model, report = train_reference_model(task, epochs=0, seed=0, **TINY)
    assert report["clean_wer"] >= 0.8
    assert not report["reached_target"]


def test_same_seed_identical_parameters():
    task = ToyTaskSpec()
    a, _ = train_reference_model(task, epochs=2, seed=5, **TINY)
    b, _ = train_reference_model(task, epochs=2, seed=5, **TINY)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert torch.equal(pa, pb), f"{na} differs between same-seed runs"


def test_different_seed_different_parameters():
    task = ToyTaskSpec()
    a, _ = train_reference_model(task, epochs=1, seed=5, **TINY)
    b, _ = train_reference_model(task, epochs=1, seed=6, **TINY)
    assert any(not torch.equal(pa, pb)
               for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()))


def test_report_diagnostics_fields():
    task = ToyTaskSpec()
    model, report = train_reference_model(task, epochs=1, seed=1, **TINY)
    assert len(report["epoch_losses"]) == 1
    assert report["target_wer"] == 0.02
    holdout = generate_corpus(task, 30, derive_seed(1, "holdout-corpus"))
    assert report["clean_wer"] == evaluate_model_wer(model, holdout)
