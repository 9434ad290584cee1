from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeSeries:
    """Sparse series of (block_bin, value); absent bins are implicitly 0."""

    bins: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if bins.shape != values.shape or bins.ndim != 1:
            raise ValueError("bins and values must be 1-D and equally long")
        if bins.size > 1 and np.any(np.diff(bins) <= 0):
            raise ValueError("bins must be strictly increasing")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls) -> "TimeSeries":
        return cls(np.empty(0, np.int64), np.empty(0))

    def __len__(self):
        return int(self.bins.size)

    def items(self):
        return list(zip(self.bins.tolist(), self.values.tolist()))

    def at(self, b: int) -> float:
        i = np.searchsorted(self.bins, b)
        if i < self.bins.size and self.bins[i] == b:
            return float(self.values[i])
        return 0.0


def group_sum(blocks: np.ndarray, weights: np.ndarray | None = None) -> TimeSeries:
    """Collapse a sorted block array into per-bin counts (or weight sums)."""
    if blocks.size == 0:
        return TimeSeries.empty()
    uniq, starts = np.unique(blocks, return_index=True)
    if weights is None:
        vals = np.diff(np.append(starts, blocks.size)).astype(np.float64)
    else:
        vals = np.add.reduceat(np.asarray(weights, dtype=np.float64), starts)
    return TimeSeries(uniq, vals)
