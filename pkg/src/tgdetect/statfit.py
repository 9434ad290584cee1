"""Power-law tail fitting (continuous MLE + KS-selected lower cutoff)."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InsufficientTail, TooFewTransactions
from .features import inter_event_times
from .graph import BOTH, TemporalGraph


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    x_min: float
    ks_distance: float
    n_tail: int
    discrete: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ks"] = d.pop("ks_distance")
        return d

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.where(x < self.x_min, 0.0, 1.0 - (x / self.x_min) ** (1.0 - self.alpha))


def _ks(tail: np.ndarray, alpha: float, xm: float) -> float:
    m = tail.size
    model = 1.0 - (tail / xm) ** (1.0 - alpha)
    hi = np.arange(1, m + 1) / m
    lo = np.arange(0, m) / m
    return float(max(np.abs(hi - model).max(), np.abs(model - lo).max()))


def powerlaw_fit(samples, discrete: bool = False, min_tail: int = 50, xmin_quantile: float = 0.9,
                 max_candidates: int = 1000, x_min: float | None = None) -> PowerLawFit:
    """Fit ``p(x) ~ x^-alpha`` for ``x >= x_min``.

    For each candidate cutoff (distinct sample values up to the
    ``xmin_quantile`` quantile, thinned to ``max_candidates`` by rank) the
    exponent is the maximum-likelihood estimate on the tail; the cutoff with
    the smallest KS distance wins. Non-positive samples are discarded.
    ``discrete=True`` swaps in the ``x_min - 1/2`` approximation for integer data.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    x = x[x > 0]
    if x_min is not None:
        cands = np.array([float(x_min)])
    else:
        if x.size == 0:
            raise InsufficientTail("no positive samples")
        cands = np.unique(x[x <= np.quantile(x, xmin_quantile)])
        if cands.size > max_candidates:
            cands = cands[np.unique(np.linspace(0, cands.size - 1, max_candidates).round().astype(int))]
    best = None
    for xm in cands:
        i = int(np.searchsorted(x, xm, side="left"))
        tail = x[i:]
        if tail.size < min_tail or tail[-1] <= tail[0]:
            continue
        base = xm - 0.5 if discrete and xm > 0.5 else xm
        s = np.log(tail / base).sum()
        if s <= 0:
            continue
        alpha = 1.0 + tail.size / s
        ks = _ks(tail, alpha, xm)
        if best is None or ks < best[2]:
            best = (alpha, float(xm), ks, int(tail.size))
    if best is None:
        raise InsufficientTail(f"no cutoff leaves >= {min_tail} varying samples in the tail")
    return PowerLawFit(float(best[0]), best[1], float(best[2]), best[3], discrete)


def ccdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values and P(X >= x)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    vals, first = np.unique(x, return_index=True)
    return vals, (x.size - first) / x.size


def iet_series(g: TemporalGraph, account) -> list[int]:
    """Gaps between consecutive transactions of ``account`` (both directions)."""
    blocks = g.events(account, BOTH).blocks
    if blocks.size < 2:
        raise TooFewTransactions(f"account {account!r} has fewer than 2 transactions")
    return inter_event_times(blocks).astype(np.int64).tolist()


def sample_powerlaw(alpha: float, x_min: float, n: int, rng) -> np.ndarray:
    """Inverse-CDF draws from a continuous power law."""
    u = rng.random(n)
    return x_min * (1.0 - u) ** (-1.0 / (alpha - 1.0))
