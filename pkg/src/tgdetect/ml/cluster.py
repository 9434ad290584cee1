"""K-Means with k-means++ seeding, silhouette scoring, and cosine-similarity
suspect flagging inside the cluster richest in known-malicious accounts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import NoMaliciousLabels, SingleCluster, TooFewRows, ZeroVector


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    seed: int
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return _assign(np.asarray(X, dtype=np.float64), self.centroids)[0]


def _sq_dists(X, C, budget=4_000_000):
    out = np.empty((X.shape[0], C.shape[0]))
    step = max(1, budget // max(1, C.size))
    for lo in range(0, X.shape[0], step):
        diff = X[lo:lo + step, None, :] - C[None, :, :]
        out[lo:lo + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _assign(X, C):
    d = _sq_dists(X, C)
    lab = np.argmin(d, axis=1)
    return lab, d[np.arange(X.shape[0]), lab]


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = ((X - centers[0]) ** 2).sum(1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = X[idx]
        np.minimum(closest, ((X - centers[c]) ** 2).sum(1), out=closest)
    return centers


def kmeans_fit(X, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> ClusterModel:
    """Lloyd's algorithm from a k-means++ start.

    Stops when every centroid moves less than ``tol`` (Euclidean). An empty
    cluster is re-seeded at the point currently farthest from its centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if X.shape[0] < k:
        raise TooFewRows(f"{X.shape[0]} rows for k={k}")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    labels, d = _assign(X, C)
    history = [float(d.sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        newC = np.empty_like(C)
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                newC[c] = X[labels == c].mean(axis=0)
        for c in np.nonzero(counts == 0)[0]:
            far = int(np.argmax(d))
            newC[c] = X[far]
            labels[far] = c
            d[far] = 0.0
        shift = np.sqrt(((newC - C) ** 2).sum(1)).max()
        C = newC
        labels, d = _assign(X, C)
        history.append(float(d.sum()))
        if shift < tol:
            break
    return ClusterModel(k, C, labels, float(d.sum()), seed, n_iter, history)


def pairwise_distances(X, Y=None, budget: int = 4_000_000) -> np.ndarray:
    """Euclidean distances from explicit differences (identical rows give exactly 0)."""
    X = np.asarray(X, dtype=np.float64)
    Y = X if Y is None else np.asarray(Y, dtype=np.float64)
    out = np.empty((X.shape[0], Y.shape[0]))
    step = max(1, budget // max(1, Y.shape[0] * X.shape[1]))
    for lo in range(0, X.shape[0], step):
        diff = X[lo:lo + step, None, :] - Y[None, :, :]
        out[lo:lo + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _silhouette_block(D, rows, codes, onehot, sizes):
    sums = D @ onehot  # (len(rows), k)
    own = codes[rows]
    own_size = sizes[own]
    r = np.arange(rows.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = sums[r, own] / (own_size - 1)
        mean_other = sums / sizes[None, :]
    mean_other[r, own] = np.inf
    b = mean_other.min(1)
    m = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(m > 0, (b - a) / m, 0.0)
    s[own_size <= 1] = 0.0
    return s


def silhouette_samples(X, labels, distances: np.ndarray | None = None, chunk: int = 1024) -> np.ndarray:
    labels = np.asarray(labels)
    uniq, codes = np.unique(labels, return_inverse=True)
    k = uniq.size
    if k < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    n = labels.size
    onehot = np.zeros((n, k))
    onehot[np.arange(n), codes] = 1.0
    sizes = onehot.sum(0)
    if distances is not None:
        return _silhouette_block(distances, np.arange(n), codes, onehot, sizes)
    X = np.asarray(X, dtype=np.float64)
    s = np.zeros(n)
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(lo + chunk, n))
        s[rows] = _silhouette_block(pairwise_distances(X[rows], X), rows, codes, onehot, sizes)
    return s


def silhouette(X, labels, distances: np.ndarray | None = None) -> float:
    """Mean silhouette (Euclidean); singleton-cluster points score 0."""
    return float(silhouette_samples(X, labels, distances).mean())


@dataclass
class SweepResult:
    best_k: int
    best_score: float
    table: list[dict]
    best_model: ClusterModel


def sweep_k(X, k_range=(3, 24), seeds: Sequence[int] = (0,), max_cached_rows: int = 8000) -> SweepResult:
    """Fit K-Means for each k in the inclusive range and every seed; keep the
    best silhouette per k. Ties favour the smaller k."""
    X = np.asarray(X, dtype=np.float64)
    kmin, kmax = k_range
    D = pairwise_distances(X) if X.shape[0] <= max_cached_rows else None
    table = []
    best = None
    for k in range(kmin, kmax + 1):
        if k > X.shape[0] - 1 and k > kmin:
            break
        k_best = None
        for seed in seeds:
            model = kmeans_fit(X, k, seed)
            if np.unique(model.labels).size < 2:
                score = -1.0
            else:
                score = silhouette(X, model.labels, D)
            if k_best is None or score > k_best[0]:
                k_best = (score, seed, model)
        table.append({"k": k, "silhouette": k_best[0], "seed": k_best[1], "inertia": k_best[2].inertia})
        if best is None or k_best[0] > best[0]:
            best = (k_best[0], k, k_best[2])
    return SweepResult(best[1], best[0], table, best[2])


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


@dataclass
class SuspectReport:
    cluster: int
    malicious_in_cluster: int
    cluster_size: int
    flagged: list[str]
    similarity: dict[str, float]
    epsilon: float

    def to_dict(self) -> dict:
        return {
            "cluster": self.cluster,
            "malicious_in_cluster": self.malicious_in_cluster,
            "cluster_size": self.cluster_size,
            "epsilon": self.epsilon,
            "flagged": [{"account": a, "max_similarity": self.similarity[a]} for a in self.flagged],
        }


def flag_suspects(model: ClusterModel | None, X, labels, epsilon: float = 1e-7, *,
                  assignments=None, accounts: Sequence[str] | None = None,
                  exclude_columns: Sequence[int] = ()) -> SuspectReport:
    """Flag non-malicious rows whose cosine similarity to some known-malicious
    row of the most-malicious cluster is at least ``1 - epsilon``.

    ``X`` is the similarity space; cluster membership comes from
    ``assignments`` or, failing that, ``model.predict(X)``. Columns in
    ``exclude_columns`` are ignored for similarity. Zero rows never match.
    """
    X = np.asarray(X, dtype=np.float64)
    mal = np.asarray(labels).astype(bool)
    if not mal.any():
        raise NoMaliciousLabels("no known-malicious rows")
    assign = np.asarray(assignments) if assignments is not None else model.predict(X)
    accounts = list(accounts) if accounts is not None else [str(i) for i in range(X.shape[0])]
    clusters = np.unique(assign)
    counts = np.array([np.count_nonzero(mal & (assign == c)) for c in clusters])
    top = int(clusters[int(np.argmax(counts))])  # first max -> lowest id
    keep = np.ones(X.shape[1], dtype=bool)
    keep[list(exclude_columns)] = False
    Y = X[:, keep]
    norms = np.linalg.norm(Y, axis=1)
    member = assign == top
    m_idx = np.nonzero(member & mal & (norms > 0))[0]
    c_idx = np.nonzero(member & ~mal & (norms > 0))[0]
    flagged, sim = [], {}
    if m_idx.size and c_idx.size:
        U = Y[c_idx] / norms[c_idx, None]
        V = Y[m_idx] / norms[m_idx, None]
        best = np.clip((U @ V.T).max(axis=1), -1.0, 1.0)
        for i, s in zip(c_idx, best):
            if s >= 1.0 - epsilon:
                flagged.append(accounts[i])
                sim[accounts[i]] = float(s)
    return SuspectReport(top, int(counts.max()), int(member.sum()), flagged, sim, epsilon)
