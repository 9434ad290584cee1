import numpy as np
import pytest

from tgdetect.errors import LengthMismatch
from tgdetect.ml import balanced_accuracy, metrics, stratified_split


def test_hand_example():
    m = metrics([1, 1, 1, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0, 0, 1])
    assert m["recall_mal"] == pytest.approx(2 / 3)
    assert m["recall_ben"] == pytest.approx(4 / 5)
    assert m["balanced_accuracy"] == pytest.approx((2 / 3 + 4 / 5) / 2)
    assert m["precision_mal"] == pytest.approx(2 / 3)
    assert m["precision_ben"] == pytest.approx(4 / 5)
    assert m["f1_mal"] == pytest.approx(2 / 3)


def test_perfect_and_majority():
    y = np.r_[np.ones(10, int), np.zeros(90, int)]
    assert metrics(y, y) == {k: 1.0 for k in metrics(y, y)}
    m = metrics(y, np.zeros(100, int))
    assert m["balanced_accuracy"] == 0.5 and m["precision_mal"] == 0.0 and m["f1_mal"] == 0.0


def test_random_predictions_near_half():
    rng = np.random.default_rng(0)
    y = (rng.random(100_000) < 0.1).astype(int)
    assert balanced_accuracy(y, rng.integers(0, 2, y.size)) == pytest.approx(0.5, abs=0.02)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        metrics([0, 1], [0])


def test_stratified_split_proportions():
    y = np.r_[np.ones(50, int), np.zeros(450, int)]
    tr, te = stratified_split(y, 0.2, seed=1)
    assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == 500
    assert y[te].sum() == 10 and te.size == 100
    tr2, te2 = stratified_split(y, 0.2, seed=1)
    assert np.array_equal(te, te2)


def test_four_row_confusion():
    m = metrics([1, 1, 0, 0], [1, 0, 0, 0])
    assert m["recall_mal"] == 0.5 and m["recall_ben"] == 1.0
    assert m["balanced_accuracy"] == 0.75
    assert m["precision_mal"] == 1.0 and m["f1_mal"] == pytest.approx(2 / 3, abs=1e-15)
