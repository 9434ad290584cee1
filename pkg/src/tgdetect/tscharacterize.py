"""Summary statistics over time series, plus feature selection.

Selection runs in three stages: Gini decision-stump ranking (top-k per
source attribute), greedy Pearson-correlation pruning, and PCA.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateMatrix, InputError, SingleClassInput
from .series import TimeSeries

__all__ = [
    "TimeSeries", "StatisticCatalog", "DEFAULT_STATISTICS", "summarize", "gini_rank",
    "top_k", "correlation_prune", "pca_reduce", "PCAResult", "FeatureSelection",
    "select_features", "standardize", "attribute_of",
]


def _longest_run_above_mean(x, xs=None):
    above = x > x.mean()
    best = cur = 0
    for flag in above:
        cur = cur + 1 if flag else 0
        best = max(best, cur)
    return float(best)


def _sorted_quantile(xs: np.ndarray, q: float) -> float:
    # linear interpolation between order statistics, as numpy's default
    pos = q * (xs.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, xs.size - 1)
    return float(xs[lo] + (pos - lo) * (xs[hi] - xs[lo]))


# each statistic receives the values in time order and a sorted copy
_BASE_STATS: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {
    "min": lambda x, xs: float(xs[0]),
    "max": lambda x, xs: float(xs[-1]),
    "mean": lambda x, xs: float(x.mean()),
    "median": lambda x, xs: _sorted_quantile(xs, 0.5),
    "std": lambda x, xs: float(x.std()),
    "sum": lambda x, xs: float(x.sum()),
    "count_above_mean": lambda x, xs: float(np.count_nonzero(x > x.mean())),
    "longest_run_above_mean": _longest_run_above_mean,
}

DEFAULT_STATISTICS = (
    "min", "max", "mean", "median", "std", "q0.1", "q0.25", "q0.75", "q0.9",
    "sum", "count_above_mean", "longest_run_above_mean",
)


def _resolve(name: str) -> Callable[[np.ndarray, np.ndarray], float]:
    if name in _BASE_STATS:
        return _BASE_STATS[name]
    if name.startswith("q"):
        try:
            q = float(name[1:])
        except ValueError:
            q = -1.0
        if 0.0 <= q <= 1.0:
            return lambda x, xs, q=q: _sorted_quantile(xs, q)
    raise InputError(f"unknown statistic {name!r}")


@dataclass(frozen=True)
class StatisticCatalog:
    """Ordered statistic names; ``qP`` means the P-quantile (linear interpolation)."""

    names: tuple[str, ...] = DEFAULT_STATISTICS

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise InputError("statistic names must be unique")
        if not names:
            raise InputError("statistic catalog is empty")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_funcs", tuple(_resolve(n) for n in names))

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)


def summarize(series, catalog: StatisticCatalog | None = None) -> np.ndarray:
    """One value per catalog statistic, computed over the recorded points.

    Accepts a ``TimeSeries`` or a plain sequence of values. An empty series
    yields a zero vector.
    """
    catalog = catalog or StatisticCatalog()
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return np.zeros(len(catalog))
    xs = np.sort(x)
    return np.array([f(x, xs) for f in catalog._funcs])


# ---------------------------------------------------------------------------
# Gini ranking
# ---------------------------------------------------------------------------


def _gini(counts):
    n = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n > 0, counts / n, 0.0)
    return 1.0 - (p**2).sum(axis=-1)


def stump_gini_decrease(col: np.ndarray, y_codes: np.ndarray, n_classes: int) -> float:
    """Best impurity decrease of a single threshold split on ``col``."""
    order = np.argsort(col, kind="stable")
    xs = col[order]
    onehot = np.zeros((col.size, n_classes))
    onehot[np.arange(col.size), y_codes[order]] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return 0.0
    total = left[-1] + onehot[-1]
    right = total - left
    n = col.size
    nl = left.sum(axis=1)
    weighted = (nl * _gini(left) + (n - nl) * _gini(right)) / n
    best = float(_gini(total[None, :])[0] - weighted[valid].min())
    return max(best, 0.0)


def gini_rank(X, y, names: Sequence[str] | None = None) -> list[tuple[str, float]]:
    """Rank columns by decision-stump Gini impurity decrease (descending).

    Ties keep column order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InputError("X must be 2-D with one label per row")
    classes, codes = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise SingleClassInput("Gini ranking needs at least two classes")
    names = list(names) if names is not None else [str(i) for i in range(X.shape[1])]
    scores = [stump_gini_decrease(X[:, j], codes, classes.size) for j in range(X.shape[1])]
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return [(names[j], scores[j]) for j in order]


def attribute_of(name: str) -> str:
    """Source attribute of a column: ``inDegree__median`` -> ``inDegree``."""
    return name.split("__", 1)[0]


def top_k(ranking, k: int = 3, group: Callable[[str], str] = attribute_of) -> dict[str, list[tuple[str, float]]]:
    out: dict[str, list[tuple[str, float]]] = {}
    for name, score in ranking:
        bucket = out.setdefault(group(name), [])
        if len(bucket) < k:
            bucket.append((name, score))
    return out


# ---------------------------------------------------------------------------
# correlation pruning
# ---------------------------------------------------------------------------


def standardize(X, eps: float = 0.0):
    """Column z-scores; zero-variance columns become zeros. Returns (Z, mean, scale)."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > eps, std, 1.0)
    Z = (X - mean) / scale
    Z[:, std <= eps] = 0.0
    return Z, mean, scale


def pearson_matrix(X) -> np.ndarray:
    Z, _, _ = standardize(X)
    r = (Z.T @ Z) / max(Z.shape[0], 1)
    np.clip(r, -1.0, 1.0, out=r)
    return r


def correlation_prune(X, threshold: float = 0.9, names: Sequence[str] | None = None):
    """Greedy column-order pruning by absolute Pearson correlation.

    Returns ``(retained_indices, dropped)`` where ``dropped`` lists
    ``(dropped_name, kept_name, r)`` for the strongest offending pair.
    """
    X = np.asarray(X, dtype=np.float64)
    names = list(names) if names is not None else [str(i) for i in range(X.shape[1])]
    r = pearson_matrix(X)
    kept: list[int] = []
    dropped = []
    for j in range(X.shape[1]):
        if kept:
            rk = r[j, kept]
            worst = int(np.argmax(np.abs(rk)))
            if abs(rk[worst]) >= threshold:
                dropped.append((names[j], names[kept[worst]], float(rk[worst])))
                continue
        kept.append(j)
    return kept, dropped


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass
class PCAResult:
    components: np.ndarray  # (n_components, n_features), orthonormal rows
    explained_ratio: np.ndarray  # all components, nonincreasing
    n_components: int
    mean: np.ndarray
    scale: np.ndarray
    singular_values: np.ndarray
    transformed: np.ndarray

    def transform(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
        return Z @ self.components.T

    def inverse_transform(self, T) -> np.ndarray:
        return (np.asarray(T) @ self.components) * self.scale + self.mean


def pca_reduce(X, variance_target: float = 0.982, n_components: int | None = None,
               standardize_input: bool = True) -> PCAResult:
    """PCA keeping the fewest components whose cumulative explained-variance
    ratio exceeds ``variance_target``.

    Each component is sign-fixed so its largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateMatrix("PCA needs a 2-D matrix with at least 2 rows")
    if standardize_input:
        Z, mean, scale = standardize(X)
    else:
        mean = X.mean(axis=0)
        scale = np.ones(X.shape[1])
        Z = X - mean
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    var = s**2
    if var.sum() <= 0:
        raise DegenerateMatrix("matrix has zero total variance")
    ratio = var / var.sum()
    for k in range(Vt.shape[0]):
        if Vt[k, np.argmax(np.abs(Vt[k]))] < 0:
            Vt[k] *= -1
            U[:, k] *= -1
    if n_components is None:
        cum = np.cumsum(ratio)
        hits = np.nonzero(cum > variance_target)[0]
        n_components = int(hits[0]) + 1 if (variance_target < 1 and hits.size) else Vt.shape[0]
    n_components = max(1, min(int(n_components), Vt.shape[0]))
    comps = Vt[:n_components].copy()
    return PCAResult(comps, ratio, n_components, mean, scale, s, Z @ comps.T)


# ---------------------------------------------------------------------------
# full selection
# ---------------------------------------------------------------------------


@dataclass
class FeatureSelection:
    ranking: list[tuple[str, float]]
    top: dict[str, list[tuple[str, float]]]
    selected: list[str]
    retained: list[str]
    dropped: list[tuple[str, str, float]]
    pca: PCAResult | None = None
    pca_names: list[str] = field(default_factory=list)

    def report(self) -> dict:
        rep = {
            "top_per_attribute": {a: [{"column": n, "score": s} for n, s in v] for a, v in self.top.items()},
            "selected": self.selected,
            "retained_after_correlation": self.retained,
            "dropped_by_correlation": [{"column": d, "against": k, "r": r} for d, k, r in self.dropped],
        }
        if self.pca is not None:
            rep["pca"] = {
                "n_components": self.pca.n_components,
                "explained_ratio": self.pca.explained_ratio.tolist(),
                "input_columns": self.pca_names,
                "loadings": self.pca.components.tolist(),
            }
        return rep


def select_features(X, y, names: Sequence[str], k: int = 3, corr_threshold: float = 0.9,
                    variance_target: float | None = 0.982) -> FeatureSelection:
    """Gini top-k per attribute, then correlation pruning, then PCA."""
    X = np.asarray(X, dtype=np.float64)
    names = list(names)
    ranking = gini_rank(X, y, names)
    top = top_k(ranking, k)
    chosen = {n for v in top.values() for n, _ in v}
    selected = [n for n in names if n in chosen]
    col = {n: i for i, n in enumerate(names)}
    Xs = X[:, [col[n] for n in selected]]
    kept, dropped = correlation_prune(Xs, corr_threshold, selected)
    retained = [selected[i] for i in kept]
    pca = None
    if variance_target is not None:
        pca = pca_reduce(Xs[:, kept], variance_target)
    return FeatureSelection(ranking, top, selected, retained, dropped, pca, retained)
