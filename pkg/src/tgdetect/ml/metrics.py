from __future__ import annotations

import numpy as np

from ..errors import LengthMismatch

# Report row fields, malicious = class 1, benign = class 0
REPORT_FIELDS = (
    "balanced_accuracy",
    "precision_mal", "precision_ben",
    "recall_mal", "recall_ben",
    "f1_mal", "f1_ben",
)


def _prf(y_true, y_pred, cls):
    tp = np.count_nonzero((y_pred == cls) & (y_true == cls))
    pp = np.count_nonzero(y_pred == cls)
    ap = np.count_nonzero(y_true == cls)
    precision = tp / pp if pp else 0.0
    recall = tp / ap if ap else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def metrics(y_true, y_pred) -> dict[str, float]:
    """Balanced accuracy plus per-class precision / recall / F1.

    Labels are binary with 1 = malicious. Precision is 0 for a class that
    was never predicted; balanced accuracy averages recall over the classes
    present in ``y_true``.
    """
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape[0]} true labels vs {y_pred.shape[0]} predictions")
    p1, r1, f1 = _prf(y_true, y_pred, 1)
    p0, r0, f0 = _prf(y_true, y_pred, 0)
    present = [r for r, c in ((r1, 1), (r0, 0)) if np.any(y_true == c)]
    return {
        "balanced_accuracy": float(np.mean(present)) if present else 0.0,
        "precision_mal": float(p1), "precision_ben": float(p0),
        "recall_mal": float(r1), "recall_ben": float(r0),
        "f1_mal": float(f1), "f1_ben": float(f0),
    }


def balanced_accuracy(y_true, y_pred) -> float:
    return metrics(y_true, y_pred)["balanced_accuracy"]


def stratified_split(y, test_fraction: float = 0.2, seed: int = 0):
    """Index arrays (train, test) preserving class proportions."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(idx.size)]
        n_test = int(round(test_fraction * idx.size))
        if idx.size > 1:
            n_test = min(max(n_test, 1), idx.size - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
