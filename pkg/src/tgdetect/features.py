"""Per-account temporal graph features.

All thresholds compare strictly: a value is bursty when it is greater than
its threshold, and a transaction is a temporal burst event when its gap to
the previous transaction is less than ``theta_t``.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NoTransactions, UnknownAccount
from .graph import BOTH, IN, OUT, TemporalGraph
from .series import TimeSeries, group_sum
from .tscharacterize import StatisticCatalog, summarize

log = logging.getLogger(__name__)

BURST_FACTOR = 0.8


@dataclass(frozen=True)
class ActiveState:
    transactedFirst: int
    transactedLast: int
    durationActive: int
    activeSinceLast: int


@dataclass(frozen=True)
class Thresholds:
    """Burst and attractiveness thresholds.

    ``None`` for theta_d / theta_b / theta_g means ``factor * max`` of the
    account's own values; ``None`` for theta_a means the sub-dataset duration.
    ``theta_t_overrides`` gives per-account temporal thresholds.
    """

    theta_t: float = 2
    factor: float = BURST_FACTOR
    theta_a: int | None = None
    theta_d: float | None = None
    theta_b: float | None = None
    theta_g: float | None = None
    theta_t_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("theta_t", "factor", "theta_a", "theta_d", "theta_b", "theta_g"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")

    def temporal_for(self, account) -> float:
        return self.theta_t_overrides.get(account, self.theta_t)


@dataclass(frozen=True)
class DegreeBurst:
    numberOfDegreeBursts: int
    numberOfDegreeBurstInstances: int
    largestBurstAt: int


@dataclass(frozen=True)
class BalanceFeatures:
    maxInBalance: float
    maxOutBalance: float
    zeroBalanceTransactions: int
    totalBalance: float
    averagePerInBalance: float


def _require(ev, account, what="transactions"):
    if len(ev) == 0:
        raise NoTransactions(f"account {account!r} has no {what}")


def _runs(flags_bins: np.ndarray) -> int:
    """Number of maximal runs of consecutive integers in a sorted bin array."""
    if flags_bins.size == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(flags_bins) != 1))


# ---------------------------------------------------------------------------
# active state
# ---------------------------------------------------------------------------


def active_state_from_blocks(blocks) -> ActiveState:
    bins = np.unique(np.asarray(blocks, dtype=np.int64))
    if bins.size == 0:
        raise NoTransactions("no transactions")
    first, last = int(bins[0]), int(bins[-1])
    gaps = np.nonzero(np.diff(bins) != 1)[0]
    run_start = int(gaps[-1]) + 1 if gaps.size else 0
    return ActiveState(first, last, last - first, int(bins.size - run_start))


def active_state(g: TemporalGraph, account) -> ActiveState:
    ev = g.events(account, BOTH)
    _require(ev, account)
    return active_state_from_blocks(ev.blocks)


# ---------------------------------------------------------------------------
# attractiveness
# ---------------------------------------------------------------------------


def attractiveness_from_neighborhoods(bins: Sequence[int], neighborhoods: Sequence[set], theta_a: int,
                                      start: int | None = None) -> TimeSeries:
    """Attractiveness for each bin given that bin's (nonempty) in-neighbour set.

    History for bin t is the union of neighbourhoods in bins
    ``max(start, t - theta_a) .. t - 1``.
    """
    if theta_a < 1:
        raise ValueError("theta_a must be >= 1")
    window: deque = deque()
    counts: dict = {}
    out = []
    for t, cur in zip(bins, neighborhoods):
        lo = t - theta_a if start is None else max(start, t - theta_a)
        while window and window[0][0] < lo:
            _, old = window.popleft()
            for p in old:
                counts[p] -= 1
                if not counts[p]:
                    del counts[p]
        if not cur:
            out.append(0.0)
        else:
            inter = sum(1 for p in cur if p in counts)
            union = len(counts) + len(cur) - inter
            out.append(1.0 - inter / union)
        window.append((t, cur))
        for p in cur:
            counts[p] = counts.get(p, 0) + 1
    return TimeSeries(np.asarray(bins, dtype=np.int64), np.asarray(out, dtype=np.float64))


def attractiveness_series(g: TemporalGraph, account, theta_a: int | None = None) -> TimeSeries:
    """Per-bin attractiveness over bins with incoming activity (other bins are 0)."""
    if theta_a is None:
        theta_a = max(g.end - g.start, 1)
    ev = g.in_events(account)
    if len(ev) == 0:
        if theta_a < 1:
            raise ValueError("theta_a must be >= 1")
        return TimeSeries.empty()
    bins, starts = np.unique(ev.blocks, return_index=True)
    bounds = np.append(starts, ev.blocks.size)
    peers = ev.peers.tolist()
    hoods = [set(peers[bounds[k]:bounds[k + 1]]) for k in range(bins.size)]
    return attractiveness_from_neighborhoods(bins.tolist(), hoods, theta_a, g.start)


# ---------------------------------------------------------------------------
# bursts
# ---------------------------------------------------------------------------


def temporal_bursts_from_blocks(blocks, theta_t: float) -> tuple[int, int]:
    """(number of burst runs, longest run duration) for a sorted block list.

    A run's duration spans from the transaction just before the run to the
    run's last transaction.
    """
    b = np.asarray(blocks, dtype=np.int64)
    if b.size == 0:
        raise NoTransactions("no transactions")
    if b.size < 2:
        return 0, 0
    burst = np.diff(b) < theta_t  # burst[k] refers to transaction k+1
    if not burst.any():
        return 0, 0
    edges = np.diff(np.concatenate([[False], burst, [False]]).astype(np.int8))
    run_starts = np.nonzero(edges == 1)[0]  # index into burst
    run_ends = np.nonzero(edges == -1)[0] - 1
    durations = b[run_ends + 1] - b[run_starts]
    return int(run_starts.size), int(durations.max())


def temporal_bursts(g: TemporalGraph, account, theta_t: float = 2, direction=BOTH) -> tuple[int, int]:
    ev = g.events(account, direction)
    _require(ev, account)
    return temporal_bursts_from_blocks(ev.blocks, theta_t)


def degree_bursts_from_series(series: TimeSeries, theta_d: float | None = None,
                              factor: float = BURST_FACTOR) -> DegreeBurst:
    if len(series) == 0:
        raise NoTransactions("empty degree series")
    vals = series.values
    if theta_d is None:
        theta_d = factor * vals.max()
    hot = series.bins[vals > theta_d]
    largest = int(series.bins[int(np.argmax(vals))])
    return DegreeBurst(_runs(hot), int(hot.size), largest)


def degree_bursts(g: TemporalGraph, account, direction=IN, theta_d: float | None = None,
                  factor: float = BURST_FACTOR) -> DegreeBurst:
    series = g.degree_series(account, direction)
    if len(series) == 0:
        raise NoTransactions(f"account {account!r} has no {direction} transactions")
    return degree_bursts_from_series(series, theta_d, factor)


def _value_bursts(blocks, values, theta, factor):
    if values.size == 0:
        raise NoTransactions("no transactions")
    if theta is None:
        theta = factor * values.max()
    hot = values > theta
    return int(np.count_nonzero(hot)), int(np.unique(blocks[hot]).size)


def balance_bursts(g: TemporalGraph, account, direction=IN, theta_b: float | None = None,
                   factor: float = BURST_FACTOR) -> tuple[int, int]:
    """(transactions above theta_b, distinct bins holding one) for in or out."""
    if direction not in (IN, OUT):
        raise ValueError("balance bursts are defined for in or out only")
    ev = g.events(account, direction)
    _require(ev, account, f"{direction} transactions")
    return _value_bursts(ev.blocks, ev.values, theta_b, factor)


def gasprice_bursts(g: TemporalGraph, account, theta_g: float | None = None,
                    factor: float = BURST_FACTOR) -> int:
    """Distinct bins where the account sent a transaction priced above theta_g."""
    ev = g.out_events(account)
    _require(ev, account, "sent transactions")
    return _value_bursts(ev.blocks, ev.gas_prices, theta_g, factor)[1]


# ---------------------------------------------------------------------------
# balance
# ---------------------------------------------------------------------------


def balance_features(g: TemporalGraph, account) -> BalanceFeatures:
    a, b = g.in_events(account), g.out_events(account)
    vin, vout = a.values, b.values
    return BalanceFeatures(
        maxInBalance=float(vin.max()) if vin.size else 0.0,
        maxOutBalance=float(vout.max()) if vout.size else 0.0,
        zeroBalanceTransactions=int(np.count_nonzero(vin == 0) + np.count_nonzero(vout == 0)),
        totalBalance=float(vin.sum() - vout.sum()),
        averagePerInBalance=float(vin.mean()) if vin.size else 0.0,
    )


# ---------------------------------------------------------------------------
# series + extraction
# ---------------------------------------------------------------------------

SERIES = ("inDegree", "outDegree", "inBalance", "outBalance", "gasPrice", "attractiveness", "interEventTime")

_DIRS = (IN, OUT, BOTH)
SCALARS_HEAD = ("transactedFirst", "transactedLast", "durationActive", "activeSinceLast")
SCALARS_TAIL = (
    *(f"numberOfTemporalBursts_{d}" for d in _DIRS),
    *(f"longestBurstDuration_{d}" for d in _DIRS),
    *(f"numberOfDegreeBursts_{d}" for d in _DIRS),
    *(f"numberOfDegreeBurstInstances_{d}" for d in _DIRS),
    *(f"largestBurstAt_{d}" for d in _DIRS),
    *(f"numberOfBalanceBursts_{d}" for d in (IN, OUT)),
    *(f"numberOfBalanceBurstyInstances_{d}" for d in (IN, OUT)),
    "numberOfGasPriceBurstyInstances",
    "maxInBalance", "maxOutBalance", "zeroBalanceTransactions", "totalBalance", "averagePerInBalance",
    "clusteringCoefficient",
    "inDegreeAgg", "outDegreeAgg", "uniqueInDegree",
)


def inter_event_times(blocks) -> np.ndarray:
    return np.diff(np.sort(np.asarray(blocks, dtype=np.int64))).astype(np.float64)


def account_series(g: TemporalGraph, account, theta_a: int | None = None) -> dict[str, TimeSeries]:
    """The seven raw series for one account, keyed by ``SERIES`` names."""
    a, b = g.in_events(account), g.out_events(account)
    gp = group_sum(b.blocks, b.gas_prices / 1e9)
    if len(gp):
        gp = TimeSeries(gp.bins, gp.values / group_sum(b.blocks).values)  # mean Gwei per bin
    iet = inter_event_times(np.concatenate([a.blocks, b.blocks]))
    return {
        "inDegree": group_sum(a.blocks),
        "outDegree": group_sum(b.blocks),
        "inBalance": group_sum(a.blocks, a.values),
        "outBalance": group_sum(b.blocks, b.values),
        "gasPrice": gp,
        "attractiveness": attractiveness_series(g, account, theta_a),
        "interEventTime": TimeSeries(np.arange(1, iet.size + 1), iet),
    }


def feature_names(catalog: StatisticCatalog | None = None) -> list[str]:
    catalog = catalog or StatisticCatalog()
    return [*SCALARS_HEAD, *(f"{s}__{st}" for s in SERIES for st in catalog), *SCALARS_TAIL]


def _or_zero(fn, *args, width=1, **kw):
    try:
        return fn(*args, **kw)
    except NoTransactions:
        return (0,) * width if width > 1 else 0


def account_features(g: TemporalGraph, account, thresholds: Thresholds | None = None,
                     catalog: StatisticCatalog | None = None) -> np.ndarray:
    """Feature row for one account, in ``feature_names(catalog)`` order."""
    th = thresholds or Thresholds()
    catalog = catalog or StatisticCatalog()
    f = th.factor
    st = active_state(g, account)
    series = account_series(g, account, th.theta_a)
    stats = [summarize(series[s], catalog) for s in SERIES]
    tt = th.temporal_for(account)
    tb = [_or_zero(temporal_bursts, g, account, tt, d, width=2) for d in _DIRS]
    db = [_or_zero(lambda *a: tuple(asdict(degree_bursts(*a)).values()), g, account, d, th.theta_d, f, width=3)
          for d in _DIRS]
    bb = [_or_zero(balance_bursts, g, account, d, th.theta_b, f, width=2) for d in (IN, OUT)]
    gb = _or_zero(gasprice_bursts, g, account, th.theta_g, f)
    bal = balance_features(g, account)
    row = [
        *asdict(st).values(),
        *np.concatenate(stats),
        *(x[0] for x in tb), *(x[1] for x in tb),
        *(x[0] for x in db), *(x[1] for x in db), *(x[2] for x in db),
        *(x[0] for x in bb), *(x[1] for x in bb),
        gb,
        *asdict(bal).values(),
        g.clustering_coefficient(account),
        g.in_degree_agg(account), g.out_degree_agg(account), g.unique_in_degree(account),
    ]
    return np.asarray(row, dtype=np.float64)


@dataclass
class FeatureMatrix:
    accounts: list[str]
    columns: list[str]
    values: np.ndarray
    labels: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    def column(self, name) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.columns.index(n) for n in names]
        return FeatureMatrix(self.accounts, list(names), self.values[:, idx], self.labels,
                             list(self.warnings), dict(self.thresholds))

    def schema(self) -> dict:
        cols = []
        for n in self.columns:
            if "__" in n:
                s, stat = n.split("__", 1)
                cols.append({"name": n, "kind": "series", "series": s, "statistic": stat})
            else:
                cols.append({"name": n, "kind": "scalar"})
        return {"columns": cols, "thresholds": self.thresholds, "warnings": self.warnings,
                "n_rows": len(self.accounts)}


def extract_all(g: TemporalGraph, accounts: Iterable[str] | None = None,
                thresholds: Thresholds | None = None,
                catalog: StatisticCatalog | None = None) -> FeatureMatrix:
    """Feature matrix with one row per account (graph order when ``accounts`` is None).

    Accounts missing from the graph get an all-zero row and a warning.
    """
    th = thresholds or Thresholds()
    catalog = catalog or StatisticCatalog()
    names = feature_names(catalog)
    accounts = list(g.accounts if accounts is None else accounts)
    rows = np.zeros((len(accounts), len(names)))
    warnings = []
    for k, acct in enumerate(accounts):
        try:
            rows[k] = account_features(g, acct, th, catalog)
        except (UnknownAccount, NoTransactions) as exc:
            msg = f"{acct}: imputed zeros ({exc})"
            log.warning(msg)
            warnings.append(msg)
    resolved = {
        "theta_t": th.theta_t,
        "factor": th.factor,
        "theta_a": th.theta_a if th.theta_a is not None else max(g.end - g.start, 1),
        "theta_d": th.theta_d if th.theta_d is not None else f"{th.factor}*max(degree)",
        "theta_b": th.theta_b if th.theta_b is not None else f"{th.factor}*max(value)",
        "theta_g": th.theta_g if th.theta_g is not None else f"{th.factor}*max(gasPrice)",
        "statistics": list(catalog.names),
    }
    return FeatureMatrix(accounts, names, rows, None, warnings, resolved)
