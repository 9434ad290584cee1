"""Temporal directed multigraph over one sub-dataset.

Each account owns two event lists (incoming, outgoing) stored as contiguous
slices of flat arrays, sorted by block. Self-loops are dropped at build time.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import UnknownAccount
from .ingest import SubDataset, Transaction, WEI_PER_ETHER
from .series import TimeSeries, group_sum

IN, OUT, BOTH = "in", "out", "both"


@dataclass(frozen=True)
class Events:
    """View of one account's events in one direction, sorted by block."""

    blocks: np.ndarray
    peers: np.ndarray
    values: np.ndarray  # Ether
    gas_prices: np.ndarray  # wei

    def __len__(self):
        return int(self.blocks.size)

    def within(self, window) -> "Events":
        if window is None:
            return self
        a, b = np.searchsorted(self.blocks, window[0]), np.searchsorted(self.blocks, window[1])
        return Events(self.blocks[a:b], self.peers[a:b], self.values[a:b], self.gas_prices[a:b])


def _csr(owner, order_key, n, cols):
    order = np.lexsort((np.arange(owner.size), order_key, owner))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, owner + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, [c[order] for c in cols]


class TemporalGraph:
    def __init__(self, transactions: Iterable[Transaction], start: int | None = None, end: int | None = None):
        txs = [t for t in transactions if t.source != t.destination]
        self.accounts: list[str] = sorted({t.source for t in txs} | {t.destination for t in txs})
        self.index: dict[str, int] = {a: i for i, a in enumerate(self.accounts)}
        n = len(self.accounts)
        src = np.fromiter((self.index[t.source] for t in txs), dtype=np.int64, count=len(txs))
        dst = np.fromiter((self.index[t.destination] for t in txs), dtype=np.int64, count=len(txs))
        blk = np.fromiter((t.block_number for t in txs), dtype=np.int64, count=len(txs))
        val = np.fromiter((t.value / WEI_PER_ETHER for t in txs), dtype=np.float64, count=len(txs))
        gp = np.fromiter((t.gas_price for t in txs), dtype=np.float64, count=len(txs))
        if start is None:
            start = int(blk.min()) if blk.size else 0
        if end is None:
            end = int(blk.max()) + 1 if blk.size else start
        self.start, self.end = int(start), int(end)
        self.n_events = len(txs)
        self._in_ptr, (self._in_blk, self._in_peer, self._in_val, self._in_gp) = _csr(dst, blk, n, (blk, src, val, gp))
        self._out_ptr, (self._out_blk, self._out_peer, self._out_val, self._out_gp) = _csr(src, blk, n, (blk, dst, val, gp))
        self._full_in: list[set] | None = None
        self._full_out: list[set] | None = None

    def __len__(self):
        return len(self.accounts)

    def __contains__(self, account):
        return account in self.index

    @property
    def block_range(self) -> tuple[int, int]:
        return self.start, self.end

    def idx(self, account: str) -> int:
        try:
            return self.index[account]
        except KeyError:
            raise UnknownAccount(f"account {account!r} not in graph") from None

    def _check_window(self, window):
        if window is None:
            return None
        a, b = int(window[0]), int(window[1])
        if a > b or a < self.start or b > self.end:
            raise ValueError(f"window [{a}, {b}) outside graph range [{self.start}, {self.end})")
        return a, b

    # -- raw events --------------------------------------------------------

    def in_events(self, account, window=None) -> Events:
        i = self.idx(account)
        s = slice(self._in_ptr[i], self._in_ptr[i + 1])
        ev = Events(self._in_blk[s], self._in_peer[s], self._in_val[s], self._in_gp[s])
        return ev.within(self._check_window(window))

    def out_events(self, account, window=None) -> Events:
        i = self.idx(account)
        s = slice(self._out_ptr[i], self._out_ptr[i + 1])
        ev = Events(self._out_blk[s], self._out_peer[s], self._out_val[s], self._out_gp[s])
        return ev.within(self._check_window(window))

    def events(self, account, direction=BOTH, window=None) -> Events:
        if direction == IN:
            return self.in_events(account, window)
        if direction == OUT:
            return self.out_events(account, window)
        if direction != BOTH:
            raise ValueError(f"direction must be in/out/both, got {direction!r}")
        a, b = self.in_events(account, window), self.out_events(account, window)
        blocks = np.concatenate([a.blocks, b.blocks])
        order = np.argsort(blocks, kind="stable")
        return Events(
            blocks[order],
            np.concatenate([a.peers, b.peers])[order],
            np.concatenate([a.values, b.values])[order],
            np.concatenate([a.gas_prices, b.gas_prices])[order],
        )

    # -- neighborhoods -------------------------------------------------------

    def _peer_sets(self, direction, window):
        """Per-account peer-index sets for every account, restricted to window."""
        if window is None:
            cached = self._full_in if direction == IN else self._full_out
            if cached is not None:
                return cached
        ptr, blk, peer = (
            (self._in_ptr, self._in_blk, self._in_peer) if direction == IN
            else (self._out_ptr, self._out_blk, self._out_peer)
        )
        sets = []
        for i in range(len(self.accounts)):
            lo, hi = ptr[i], ptr[i + 1]
            if window is not None:
                b = blk[lo:hi]
                lo, hi = lo + np.searchsorted(b, window[0]), lo + np.searchsorted(b, window[1])
            sets.append(set(peer[lo:hi].tolist()))
        if window is None:
            if direction == IN:
                self._full_in = sets
            else:
                self._full_out = sets
        return sets

    def neighborhood_in(self, account, window=None) -> set[str]:
        """Distinct senders to ``account`` within ``window`` (half-open block range)."""
        ev = self.in_events(account, window)
        return {self.accounts[p] for p in set(ev.peers.tolist())}

    def neighborhood_out(self, account, window=None) -> set[str]:
        ev = self.out_events(account, window)
        return {self.accounts[p] for p in set(ev.peers.tolist())}

    # -- degree ------------------------------------------------------------

    def degree_series(self, account, direction=IN) -> TimeSeries:
        return group_sum(self.events(account, direction).blocks)

    def in_degree_agg(self, account) -> int:
        return len(self.in_events(account))

    def out_degree_agg(self, account) -> int:
        return len(self.out_events(account))

    def unique_in_degree(self, account) -> int:
        return int(np.unique(self.in_events(account).peers).size)

    # -- clustering coefficient ---------------------------------------------

    def clustering_coefficient(self, account, window=None) -> float:
        """Directed clustering coefficient over edges inside ``window``.

        Uses edge indicators (multi-edges count once) and skips r == s
        pairs; returns 0 when the normaliser is not positive.
        """
        i = self.idx(account)
        window = self._check_window(window)
        if window == (self.start, self.end):
            window = None
        if window is None:
            ins, outs = self._peer_sets(IN, None), self._peer_sets(OUT, None)
            n_in, n_out = ins[i], outs[i]
            out_of = outs.__getitem__
        else:
            n_in = set(self.in_events(account, window).peers.tolist())
            n_out = set(self.out_events(account, window).peers.tolist())
            cache = {}

            def out_of(r):
                if r not in cache:
                    lo, hi = self._out_ptr[r], self._out_ptr[r + 1]
                    b = self._out_blk[lo:hi]
                    a, z = lo + np.searchsorted(b, window[0]), lo + np.searchsorted(b, window[1])
                    cache[r] = set(self._out_peer[a:z].tolist())
                return cache[r]

        deg_tot = len(n_in) + len(n_out)
        n_bi = len(n_in & n_out)
        denom = 2 * (deg_tot * (deg_tot - 1) - 2 * n_bi)
        if denom <= 0:
            return 0.0
        weight = {r: (r in n_out) + (r in n_in) for r in n_in | n_out}
        # sum_{r!=s} w_r w_s (a_rs + a_sr) == 2 * sum_{r!=s} w_r w_s a_rs
        acc = 0
        for r, wr in weight.items():
            for s in out_of(r):
                ws = weight.get(s)
                if ws is not None and s != r:
                    acc += wr * ws
        return 2 * acc / denom

    # -- debug dump ----------------------------------------------------------

    def dump_edges(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("block_bin", "source", "destination", "value", "gas_price"))
        for i, a in enumerate(self.accounts):
            lo, hi = self._out_ptr[i], self._out_ptr[i + 1]
            for k in range(lo, hi):
                w.writerow((int(self._out_blk[k]), a, self.accounts[self._out_peer[k]],
                            repr(float(self._out_val[k])), int(self._out_gp[k])))


def build(sub: SubDataset) -> TemporalGraph:
    return TemporalGraph(sub.transactions, sub.start, sub.end)


def neighborhood_in(g: TemporalGraph, account, window=None) -> set[str]:
    return g.neighborhood_in(account, window)


def degree_series(g: TemporalGraph, account, direction=IN) -> TimeSeries:
    return g.degree_series(account, direction)


def clustering_coefficient(g: TemporalGraph, account, window=None) -> float:
    return g.clustering_coefficient(account, window)
