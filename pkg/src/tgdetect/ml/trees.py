"""Extremely randomized trees (ExtraTrees) classifier.

Each tree sees a row subsample; at every node a random subset of
non-constant columns is drawn, one uniform threshold per column, and the
best (column, threshold) pair by weighted impurity decrease wins. Tree ``t``
uses seed ``seed + t`` so serial and parallel training agree bit for bit.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import BadHyperparameter, SchemaMismatch, SingleClassInput


@dataclass(frozen=True)
class ExtraTreesParams:
    n_estimators: int = 100
    criterion: str = "gini"
    max_features: float | int | str = "sqrt"
    max_samples: float | None = None
    bootstrap: bool = False
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    class_weight: str | None = None

    def validate(self):
        if self.n_estimators < 1:
            raise BadHyperparameter("n_estimators must be >= 1")
        if self.criterion not in ("gini", "entropy"):
            raise BadHyperparameter(f"criterion must be gini or entropy, got {self.criterion!r}")
        mf = self.max_features
        if isinstance(mf, str):
            if mf not in ("sqrt", "log2"):
                raise BadHyperparameter(f"bad max_features {mf!r}")
        elif isinstance(mf, float) and not 0 < mf <= 1:
            raise BadHyperparameter("fractional max_features must lie in (0, 1]")
        elif isinstance(mf, int) and mf < 1:
            raise BadHyperparameter("max_features must be >= 1")
        if self.max_samples is not None and not 0 < self.max_samples <= 1:
            raise BadHyperparameter("max_samples must lie in (0, 1]")
        if self.min_samples_leaf < 1 or self.min_samples_split < 2:
            raise BadHyperparameter("min_samples_leaf >= 1 and min_samples_split >= 2 required")
        if self.class_weight not in (None, "balanced"):
            raise BadHyperparameter(f"class_weight must be None or 'balanced', got {self.class_weight!r}")
        return self

    def n_candidates(self, n_features: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            m = int(np.sqrt(n_features))
        elif mf == "log2":
            m = int(np.log2(n_features))
        elif isinstance(mf, float):
            m = int(mf * n_features)
        else:
            m = int(mf)
        return max(1, min(m, n_features))


# tuned setting for the combined EOA + contract corpus
TUNED_PARAMS = ExtraTreesParams(
    n_estimators=200, criterion="entropy", max_features=0.3, max_samples=0.3,
    min_samples_leaf=14, min_samples_split=20, class_weight="balanced",
)


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class distribution

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def apply(self, X) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def topology(self) -> tuple:
        return tuple(self.feature.tolist()), tuple(self.left.tolist()), tuple(self.right.tolist())


def _impurity(counts, criterion):
    tot = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tot > 0, counts / tot, 0.0)
        if criterion == "gini":
            return 1.0 - (p * p).sum(axis=-1)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=-1)


def _grow(X, codes, w, n_classes, params: ExtraTreesParams, rng, sample) -> Tree:
    n_feat = X.shape[1]
    m = params.n_candidates(n_feat)
    msl, mss = params.min_samples_leaf, params.min_samples_split
    W = np.zeros((codes.size, n_classes))
    W[np.arange(codes.size), codes] = w
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    stack = [(new_node(), sample)]
    while stack:
        nid, idx = stack.pop()
        Wn = W[idx]
        cw = Wn.sum(0)
        value[nid] = cw / cw.sum() if cw.sum() > 0 else np.full(n_classes, 1.0 / n_classes)
        if idx.size < mss or idx.size < 2 * msl or np.count_nonzero(cw) <= 1:
            continue
        Xn = X[idx]
        lo, hi = Xn.min(0), Xn.max(0)
        perm = rng.permutation(n_feat)
        cands = perm[(hi[perm] > lo[perm])][:m]
        if cands.size == 0:
            continue
        u = rng.random(cands.size)
        thr = lo[cands] + u * (hi[cands] - lo[cands])
        thr = np.where(thr >= hi[cands], lo[cands], thr)
        mask = Xn[:, cands] <= thr
        n_left = mask.sum(0)
        ok = (n_left >= msl) & (idx.size - n_left >= msl)
        if not ok.any():
            continue
        lw = mask.T.astype(np.float64) @ Wn
        rw = cw - lw
        tot = cw.sum()
        gain = (_impurity(cw, params.criterion)
                - lw.sum(1) / tot * _impurity(lw, params.criterion)
                - rw.sum(1) / tot * _impurity(rw, params.criterion))
        gain = np.where(ok, gain, -np.inf)
        j = int(np.argmax(gain))
        feature[nid] = int(cands[j])
        threshold[nid] = float(thr[j])
        li, ri = new_node(), new_node()
        left[nid], right[nid] = li, ri
        stack.append((ri, idx[~mask[:, j]]))
        stack.append((li, idx[mask[:, j]]))
    return Tree(
        np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64), np.vstack(value),
    )


def schema_hash(columns: Sequence[str] | None) -> str | None:
    if columns is None:
        return None
    return hashlib.sha256("\x1f".join(columns).encode()).hexdigest()[:16]


@dataclass
class ExtraTreesModel:
    params: ExtraTreesParams
    seed: int
    classes: np.ndarray
    n_features: int
    trees: list[Tree] = field(default_factory=list)
    columns: list[str] | None = None

    def _check(self, X, columns=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaMismatch(f"expected {self.n_features} columns, got {X.shape[-1] if X.ndim else 0}")
        if columns is not None and self.columns is not None and list(columns) != self.columns:
            raise SchemaMismatch("column names differ from the training schema")
        return X

    def predict_proba(self, X, columns=None) -> np.ndarray:
        X = self._check(X, columns)
        acc = np.zeros((X.shape[0], self.classes.size))
        for t in self.trees:
            acc += t.value[t.apply(X)]
        return acc / len(self.trees)

    def predict(self, X, columns=None) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(X, columns), axis=1)]

    # persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": "ExtraTreesClassifier",
            "params": asdict(self.params),
            "seed": self.seed,
            "classes": self.classes.tolist(),
            "n_features": self.n_features,
            "columns": self.columns,
            "schema_hash": schema_hash(self.columns),
            "trees": [
                {"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                 "left": t.left.tolist(), "right": t.right.tolist(), "value": t.value.tolist()}
                for t in self.trees
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ExtraTreesModel":
        if d.get("columns") is not None and d.get("schema_hash") != schema_hash(d["columns"]):
            raise SchemaMismatch("schema hash does not match stored columns")
        trees = [
            Tree(np.asarray(t["feature"], dtype=np.int64), np.asarray(t["threshold"], dtype=np.float64),
                 np.asarray(t["left"], dtype=np.int64), np.asarray(t["right"], dtype=np.int64),
                 np.asarray(t["value"], dtype=np.float64))
            for t in d["trees"]
        ]
        return cls(ExtraTreesParams(**d["params"]), d["seed"], np.asarray(d["classes"]),
                   d["n_features"], trees, d.get("columns"))

    @classmethod
    def from_json(cls, text: str) -> "ExtraTreesModel":
        return cls.from_dict(json.loads(text))


def extratrees_train(X, y, params: ExtraTreesParams | None = None, seed: int = 0,
                     columns: Sequence[str] | None = None, n_jobs: int = 1) -> ExtraTreesModel:
    params = (params or ExtraTreesParams()).validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SchemaMismatch("X must be 2-D with one label per row")
    classes, codes = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise SingleClassInput("training labels contain a single class")
    n = X.shape[0]
    if params.class_weight == "balanced":
        cw = n / (classes.size * np.bincount(codes))
        w = cw[codes]
    else:
        w = np.ones(n)
    n_sub = n if params.max_samples is None else max(1, int(round(params.max_samples * n)))

    def one(t):
        rng = np.random.default_rng(seed + t)
        if params.bootstrap:
            sample = rng.integers(0, n, n_sub)
        else:
            sample = np.sort(rng.choice(n, n_sub, replace=False))
        return _grow(X, codes, w, classes.size, params, rng, sample)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = list(ex.map(one, range(params.n_estimators)))
    else:
        trees = [one(t) for t in range(params.n_estimators)]
    return ExtraTreesModel(params, seed, classes, X.shape[1], trees,
                           list(columns) if columns is not None else None)


def extratrees_predict(model: ExtraTreesModel, X, columns=None):
    """(labels, per-class scores)."""
    proba = model.predict_proba(X, columns)
    return model.classes[np.argmax(proba, axis=1)], proba
