import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asr_tta.decode import (
    collapse_repeats,
    corpus_wer,
    greedy_decode,
    greedy_path,
    tokenize,
    wer,
    werr,
    word_edit_distance,
)

VOCAB = ["a", "b", "c"]


def oracle_edit_distance(ref, hyp):
    """Full-matrix DP, kept separate from the rolling-array implementation."""
    m, n = len(ref), len(hyp)
    dist = np.zeros((m + 1, n + 1), dtype=int)
    dist[:, 0] = np.arange(m + 1)
    dist[0, :] = np.arange(n + 1)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            dist[i, j] = min(
                dist[i - 1, j] + 1,
                dist[i, j - 1] + 1,
                dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]),
            )
    return int(dist[m, n])


# -- greedy decode -----------------------------------------------------------


def test_collapse_textbook():
    # b = blank at index 0; path [b, a, a, b, a] -> [a, a]
    assert collapse_repeats([0, 1, 1, 0, 1], 0) == [1, 1]


def test_collapse_all_blank():
    assert collapse_repeats([0, 0, 0], 0) == []


def test_collapse_repeat_then_new():
    assert collapse_repeats([1, 1, 0, 0, 2], 0) == [1, 2]


def test_greedy_decode_maps_words():
    logits = np.array([
        [5.0, 0.0, 0.0],   # blank
        [0.0, 5.0, 0.0],   # class 1
        [0.0, 5.0, 0.0],   # class 1 repeat
        [0.0, 0.0, 5.0],   # class 2 (no word)
    ])
    t = greedy_decode(logits, 0, [None, "da", None])
    assert t.token_ids == [1, 2]
    assert t.words == ["da"]
    assert t.text == "da"


def test_greedy_path_tie_to_lowest():
    logits = np.array([[1.0, 1.0, 0.0]])
    assert greedy_path(logits).tolist() == [0]


def test_greedy_decode_idempotent_on_collapsed_path():
    # logits whose argmax path is already collapsed and blank-free
    path = [1, 2, 1]
    logits = np.full((3, 3), -5.0)
    for t, c in enumerate(path):
        logits[t, c] = 5.0
    t = greedy_decode(logits, 0, [None, "x", "y"])
    assert t.token_ids == path


# -- wer -----------------------------------------------------------------


def test_wer_identical():
    assert wer(["a", "b", "c"], ["a", "b", "c"]) == 0.0


def test_wer_one_substitution():
    assert wer("a b c".split(), "a x c".split()) == pytest.approx(1 / 3)


def test_wer_insertions_can_exceed_ratio():
    assert wer("a b".split(), "a x y b".split()) == pytest.approx(1.0)


def test_wer_empty_reference_errors():
    with pytest.raises(ValueError):
        wer([], ["a"])


def test_tokenize_lowercases_and_splits():
    assert tokenize("Da  KI\tdu") == ["da", "ki", "du"]


def test_corpus_wer_pools_errors():
    pairs = [(["a"], ["a"]), (["a", "b", "c"], ["a", "x", "c"])]
    assert corpus_wer(pairs) == pytest.approx(1 / 4)


# -- werr ---------------------------------------------------------------


def test_werr_formula():
    assert werr(41.6, 28.3) == pytest.approx((41.6 - 28.3) / 41.6)
    assert werr(41.6, 28.3) == pytest.approx(0.3197, abs=1e-4)


def test_werr_no_change():
    assert werr(0.37, 0.37) == 0.0


def test_werr_halved():
    assert werr(0.20, 0.10) == pytest.approx(0.5)


def test_werr_zero_source_errors():
    with pytest.raises(ValueError):
        werr(0.0, 0.1)


# -- oracle equivalence ----------------------------------------------------


@given(
    st.lists(st.sampled_from(VOCAB), min_size=1, max_size=6),
    st.lists(st.sampled_from(VOCAB), min_size=0, max_size=6),
)
@settings(max_examples=200, deadline=None)
def test_wer_matches_oracle_random(ref, hyp):
    assert word_edit_distance(ref, hyp) == oracle_edit_distance(ref, hyp)


@given(
    st.lists(st.sampled_from(VOCAB), min_size=1, max_size=6),
    st.lists(st.sampled_from(VOCAB), min_size=0, max_size=6),
    st.permutations(VOCAB),
)
@settings(max_examples=100, deadline=None)
def test_wer_symmetric_under_relabeling(ref, hyp, perm):
    relabel = dict(zip(VOCAB, perm))
    direct = wer(ref, hyp)
    relabeled = wer([relabel[w] for w in ref], [relabel[w] for w in hyp])
    assert direct == relabeled
