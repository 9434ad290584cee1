"""Per-account behaviour vectors across the sub-datasets of one granularity."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import EmptyVector


@dataclass(frozen=True)
class BehaviorVector:
    account: str
    granularity: str
    sd_indices: tuple[int, ...]
    elements: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.elements)

    def bitstring(self) -> str:
        return "".join(str(e) for e in self.elements)


def behavior_vector(flags: Mapping[int, int], account: str = "", granularity: str = "") -> BehaviorVector:
    """Order per-SD flags by SD index. SDs the account is absent from are
    simply not keys of ``flags``."""
    if not flags:
        raise EmptyVector(f"account {account!r} appears in no sub-dataset")
    idx = tuple(sorted(flags))
    elems = tuple(1 if flags[j] else 0 for j in idx)
    return BehaviorVector(account, granularity, idx, elems)


def _elements(m) -> tuple[int, ...]:
    elems = m.elements if isinstance(m, BehaviorVector) else tuple(m)
    if not elems:
        raise EmptyVector("empty behaviour vector")
    return elems


def change_count(m) -> int:
    e = _elements(m)
    return sum(1 for a, b in zip(e, e[1:]) if a != b)


def malicious_probability(m) -> float:
    e = _elements(m)
    return sum(e) / len(e)


@dataclass
class GranularityReport:
    granularity: str
    change_histogram: dict[int, int]  # accounts with >= 1 change only
    probability_histogram: dict[float, int]
    never_flagged: list[str]  # p_m == 0
    likely_malicious: list[str]  # p_m > threshold


def granularity_report(vectors: Iterable[BehaviorVector], p_threshold: float = 0.5) -> dict[str, GranularityReport]:
    by_g: dict[str, list[BehaviorVector]] = {}
    for v in vectors:
        by_g.setdefault(v.granularity, []).append(v)
    out = {}
    for g in sorted(by_g):
        vs = sorted(by_g[g], key=lambda v: v.account)
        changes = Counter(c for c in (change_count(v) for v in vs) if c >= 1)
        probs = [(v.account, malicious_probability(v)) for v in vs]
        out[g] = GranularityReport(
            g,
            dict(sorted(changes.items())),
            dict(sorted(Counter(p for _, p in probs).items())),
            [a for a, p in probs if p == 0],
            [a for a, p in probs if p > p_threshold],
        )
    return out


def vectors_csv(vectors: Iterable[BehaviorVector]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("account", "granularity", "n_i", "change_count", "p_m", "M_as_bitstring"))
    for v in sorted(vectors, key=lambda v: (v.granularity, v.account)):
        w.writerow((v.account, v.granularity, v.n, change_count(v), repr(malicious_probability(v)), v.bitstring()))
    return buf.getvalue()


def histograms_csv(reports: Mapping[str, GranularityReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("granularity", "histogram", "value", "count"))
    for g, rep in reports.items():
        for c, n in rep.change_histogram.items():
            w.writerow((g, "change_count", c, n))
        for p, n in rep.probability_histogram.items():
            w.writerow((g, "p_m", repr(p), n))
    return buf.getvalue()
