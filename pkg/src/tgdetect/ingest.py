"""Transaction ingestion, account labels and temporal segmentation.

Block numbers are the only clock: one block is one time bin. Any wall-clock
column present in the input is ignored.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    EmptyInput,
    InputError,
    MissingField,
    NonNumericValue,
    TargetTooLarge,
)

WEI_PER_ETHER = 10**18

TX_FIELDS = ("block_number", "tx_hash", "source", "destination", "value", "gas", "gas_price")
INT_FIELDS = ("block_number", "value", "gas", "gas_price")

# Etherscan / explorer exports use these names.
_ALIASES = {
    "blockNumber": "block_number",
    "hash": "tx_hash",
    "from": "source",
    "to": "destination",
    "gasPrice": "gas_price",
}


@dataclass(frozen=True, slots=True)
class Transaction:
    block_number: int
    source: str
    destination: str
    value: int
    gas: int
    gas_price: int
    tx_hash: str = ""

    @property
    def value_ether(self) -> float:
        return self.value / WEI_PER_ETHER


class Label(str, enum.Enum):
    MALICIOUS = "malicious"
    BENIGN = "benign"
    UNKNOWN = "unknown"


class AccountKind(str, enum.Enum):
    EOA = "EOA"
    SC = "SC"
    UNKNOWN = "unknown"


@dataclass(frozen=True, slots=True)
class AccountLabel:
    account: str
    label: Label = Label.UNKNOWN
    kind: AccountKind = AccountKind.UNKNOWN

    @property
    def is_malicious(self) -> bool:
        return self.label is Label.MALICIOUS


class Granularity(enum.Enum):
    """Temporal granularity; value is the window width in blocks (None = whole span)."""

    Day = 6000
    Week = 7 * 6000
    Month = 30 * 6000
    Quarter = 3 * 30 * 6000
    HalfYearly = 6 * 30 * 6000
    Year = 12 * 30 * 6000
    All = None

    @property
    def width_blocks(self) -> int | None:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "Granularity":
        for g in cls:
            if g.name.lower() == str(name).lower():
                return g
        raise InputError(f"unknown granularity {name!r}; expected one of {[g.name for g in cls]}")


@dataclass(frozen=True)
class SubDataset:
    granularity: Granularity
    index: int
    start: int
    end: int  # exclusive
    transactions: tuple[Transaction, ...] = ()
    accounts: frozenset[str] = field(init=False)

    def __post_init__(self):
        accts = set()
        for tx in self.transactions:
            accts.add(tx.source)
            accts.add(tx.destination)
        object.__setattr__(self, "accounts", frozenset(accts))

    @property
    def duration(self) -> int:
        return self.end - self.start

    def __len__(self):
        return len(self.transactions)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _to_text(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    # binary file-like
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _parse_uint(raw, name, line):
    if isinstance(raw, bool):
        raise NonNumericValue(f"line {line}: field {name!r} is not a non-negative integer: {raw!r}", line)
    if isinstance(raw, int):
        val = raw
    else:
        text = str(raw).strip()
        if not text or not (text.isdigit() or (text.startswith("+") and text[1:].isdigit())):
            raise NonNumericValue(
                f"line {line}: field {name!r} is not a non-negative integer: {raw!r}", line
            )
        val = int(text)
    if val < 0:
        raise NonNumericValue(f"line {line}: field {name!r} is negative: {raw!r}", line)
    return val


def _record_to_tx(rec: dict, line: int) -> Transaction:
    rec = {_ALIASES.get(k, k): v for k, v in rec.items()}
    missing = [f for f in TX_FIELDS if f != "tx_hash" and f not in rec]
    if missing:
        raise MissingField(f"line {line}: missing field(s) {', '.join(missing)}")
    nums = {f: _parse_uint(rec[f], f, line) for f in INT_FIELDS}
    src = str(rec["source"] or "").strip()
    dst = str(rec["destination"] or "").strip()
    if not src or not dst:
        raise MissingField(f"line {line}: empty source or destination")
    return Transaction(
        block_number=nums["block_number"],
        source=src,
        destination=dst,
        value=nums["value"],
        gas=nums["gas"],
        gas_price=nums["gas_price"],
        tx_hash=str(rec.get("tx_hash") or ""),
    )


def parse_transactions(source, fmt: str = "csv") -> list[Transaction]:
    """Parse csv or json-lines transaction records.

    ``source`` may be bytes, a string, or an open (text or binary) file.
    The result is sorted by block number, stable within a block. Errors
    name the 1-based input line of the offending record.
    """
    fh = _to_text(source)
    txs: list[Transaction] = []
    if fmt == "csv":
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyInput("no header row")
        header = {_ALIASES.get(h, h) for h in reader.fieldnames}
        missing = [f for f in TX_FIELDS if f != "tx_hash" and f not in header]
        if missing:
            raise MissingField(f"header lacks field(s) {', '.join(missing)}")
        for rec in reader:
            if None in rec:
                raise InputError(f"line {reader.line_num}: too many fields")
            txs.append(_record_to_tx(rec, reader.line_num))
    elif fmt in ("jsonl", "json-lines", "jsonlines"):
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise InputError(f"line {lineno}: expected a JSON object")
            txs.append(_record_to_tx(rec, lineno))
    else:
        raise InputError(f"unsupported format {fmt!r}")
    if not txs:
        raise EmptyInput("input contains no transactions")
    txs.sort(key=lambda t: t.block_number)
    return txs


def read_transactions(path, fmt: str | None = None) -> list[Transaction]:
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix in (".jsonl", ".ndjson") else "csv"
    with open(path, "rb") as fh:
        return parse_transactions(fh, fmt)


def write_transactions(txs: Iterable[Transaction], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TX_FIELDS)
    for t in txs:
        w.writerow((t.block_number, t.tx_hash, t.source, t.destination, t.value, t.gas, t.gas_price))


def read_labels(path) -> dict[str, AccountLabel]:
    """Read ``account,label,kind`` CSV; ``1``/``0`` are accepted for labels."""
    out: dict[str, AccountLabel] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "account" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise MissingField(f"{path}: label file needs columns account,label[,kind]")
        for rec in reader:
            acct = (rec["account"] or "").strip()
            if not acct:
                raise MissingField(f"{path}: line {reader.line_num}: empty account")
            raw = (rec["label"] or "").strip().lower()
            raw = {"1": "malicious", "0": "benign", "": "unknown"}.get(raw, raw)
            try:
                label = Label(raw)
            except ValueError:
                raise InputError(f"{path}: line {reader.line_num}: bad label {rec['label']!r}") from None
            kind_raw = (rec.get("kind") or "unknown").strip()
            kind = next((k for k in AccountKind if k.value.lower() == kind_raw.lower()), AccountKind.UNKNOWN)
            lab = AccountLabel(acct, label, kind)
            if acct in out and out[acct] != lab:
                raise InputError(f"{path}: conflicting labels for account {acct}")
            out[acct] = lab
    return out


def write_labels(labels: Iterable[AccountLabel], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("account", "label", "kind"))
    for lab in sorted(labels, key=lambda a: a.account):
        w.writerow((lab.account, lab.label.value, lab.kind.value))


# ---------------------------------------------------------------------------
# segmentation / sampling
# ---------------------------------------------------------------------------


def segment(transactions: Sequence[Transaction], granularity: Granularity) -> list[SubDataset]:
    """Cut a block-sorted transaction list into windows of ``granularity``.

    Windows are anchored at the smallest block present and tile the range
    ``[min_block, max_block + 1)``; a trailing partial window is kept, as
    are empty interior windows.
    """
    if not transactions:
        raise EmptyDataset("cannot segment an empty transaction list")
    blocks = [t.block_number for t in transactions]
    if any(b > a for a, b in zip(blocks[1:], blocks)):
        raise InputError("transactions must be sorted by block_number")
    lo, hi = blocks[0], blocks[-1] + 1
    width = granularity.width_blocks
    if width is None:
        return [SubDataset(granularity, 0, lo, hi, tuple(transactions))]
    n = math.ceil((hi - lo) / width)
    subs = []
    for k in range(n):
        start = lo + k * width
        end = min(start + width, hi)
        i, j = bisect_left(blocks, start), bisect_left(blocks, end)
        subs.append(SubDataset(granularity, k, start, end, tuple(transactions[i:j])))
    return subs


def undersample_benign(
    labels: Iterable[AccountLabel],
    target_benign_count: int,
    seed: int,
    candidates: Iterable[str] | None = None,
) -> list[AccountLabel]:
    """Keep every malicious account plus a uniform sample of benign ones.

    ``candidates`` optionally restricts which benign accounts may be drawn
    (for example EOAs only). The draw is independent of input order.
    """
    labels = list(labels)
    malicious = [a for a in labels if a.label is Label.MALICIOUS]
    benign = sorted((a for a in labels if a.label is Label.BENIGN), key=lambda a: a.account)
    if candidates is not None:
        allowed = set(candidates)
        benign = [a for a in benign if a.account in allowed]
    if target_benign_count < 0 or target_benign_count > len(benign):
        raise TargetTooLarge(
            f"requested {target_benign_count} benign accounts but only {len(benign)} available"
        )
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(benign), size=target_benign_count, replace=False))
    return malicious + [benign[i] for i in picks]

