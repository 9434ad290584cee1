"""Synthetic transaction corpora with planted malicious behaviour.

Benign accounts trade with a small, stable circle of counterparties chosen
by popularity (giving a fat-tailed in-degree); malicious accounts are
short-lived, pull many one-off payments from fresh victims in bursts, and
sweep the proceeds to exchanges at a premium gas price.

    python -m tgdetect.synth --out src/tgdetect/data --accounts 1000
"""
from __future__ import annotations

import argparse
import hashlib
from pathlib import Path

import numpy as np

from .ingest import AccountKind, AccountLabel, Label, Transaction, write_labels, write_transactions

GWEI = 10**9
WEI = 10**18


def _addr(i: int, seed: int) -> str:
    return "0x" + hashlib.sha256(f"acct:{seed}:{i}".encode()).hexdigest()[:40]


def _ether(x: float) -> int:
    return int(round(x * 1e6)) * 10**12  # micro-ether resolution


def generate_corpus(n_accounts: int = 1000, malicious_fraction: float = 0.1, n_blocks: int = 84_000,
                    start_block: int = 9_000_000, seed: int = 7, n_clones: int = 5):
    """Return ``(transactions, labels)`` sorted by block.

    ``n_clones`` benign-labelled accounts replay the schedule of a malicious
    account against different victims; they stand in for undisclosed
    accomplices.
    """
    rng = np.random.default_rng(seed)
    addrs = [_addr(i, seed) for i in range(n_accounts)]
    n_mal = max(1, int(round(malicious_fraction * n_accounts)))
    n_exch = max(2, n_accounts // 100)
    n_sc = max(2, n_accounts // 25)
    mal = list(range(n_mal))
    exch = list(range(n_mal, n_mal + n_exch))
    sc = list(range(n_mal + n_exch, n_mal + n_exch + n_sc))
    benign = list(range(n_mal + n_exch + n_sc, n_accounts))
    n_clones = min(n_clones, n_mal)
    clones = benign[len(benign) - n_clones:] if n_clones else []
    benign = benign[: len(benign) - n_clones]

    kinds = {i: AccountKind.EOA for i in range(n_accounts)}
    for i in sc:
        kinds[i] = AccountKind.SC
    for i in mal[: max(1, n_mal // 10)]:
        kinds[i] = AccountKind.SC
    labels = [
        AccountLabel(addrs[i], Label.MALICIOUS if i < n_mal else Label.BENIGN, kinds[i])
        for i in range(n_accounts)
    ]

    # popularity ~ Zipf over benign + contracts + exchanges
    receivers = np.array(benign + sc + exch)
    pop = 1.0 / np.arange(1, receivers.size + 1) ** 1.1
    pop = pop[rng.permutation(receivers.size)]
    pop /= pop.sum()

    rows = []  # (block, src, dst, value_wei, gas, gas_price)
    end = start_block + n_blocks

    for i in benign:
        circle = rng.choice(receivers, size=int(rng.integers(3, 8)), replace=False, p=pop)
        circle = circle[circle != i]
        if circle.size == 0:
            continue
        n_tx = int(min(60, rng.pareto(1.6) * 3 + 1))
        blocks = np.sort(rng.integers(start_block, end, n_tx))
        base_gp = rng.lognormal(np.log(12), 0.3)
        for b in blocks:
            dst = int(circle[rng.integers(circle.size)]) if rng.random() < 0.85 else int(rng.choice(receivers, p=pop))
            if dst == i:
                continue
            val = 0.0 if rng.random() < 0.08 else rng.lognormal(-1.0, 1.2)
            gp = max(1.0, base_gp * rng.lognormal(0, 0.15))
            rows.append((int(b), i, dst, _ether(val), 21000, int(gp * GWEI)))

    # exchanges pay out to their customers now and then
    for e in exch:
        for b in np.sort(rng.integers(start_block, end, int(rng.integers(20, 60)))):
            dst = int(benign[rng.integers(len(benign))])
            rows.append((int(b), e, dst, _ether(rng.lognormal(0.5, 1.0)), 21000, int(15 * GWEI)))

    victims_pool = np.array(benign)
    for m in mal:
        life = int(rng.integers(3000, 18000))
        t0 = int(rng.integers(start_block, max(start_block + 1, end - life)))
        n_bursts = int(rng.integers(2, 6))
        victims = rng.choice(victims_pool, size=min(victims_pool.size, int(rng.integers(12, 40))), replace=False)
        chunks = np.array_split(victims, n_bursts)
        received = 0.0
        for chunk in chunks:
            b = int(rng.integers(t0, t0 + life))
            for v in chunk:
                b += int(rng.integers(0, 2))
                val = rng.lognormal(0.3, 0.8)
                received += val
                rows.append((min(b, end - 1), int(v), m, _ether(val), 21000, int(rng.lognormal(np.log(12), 0.2) * GWEI)))
        for _ in range(int(rng.integers(1, 4))):
            b = int(rng.integers(t0, t0 + life))
            dst = int(exch[rng.integers(len(exch))])
            share = received * rng.uniform(0.2, 0.5)
            rows.append((min(b, end - 1), m, dst, _ether(share), 21000, int(rng.uniform(40, 90) * GWEI)))
        if m < len(clones):
            c = clones[m]
            mine = [r for r in rows if m in (r[1], r[2])]
            fresh = iter(rng.choice(np.setdiff1d(victims_pool, victims), size=len(victims), replace=False))
            swap = {int(v): int(next(fresh)) for v in victims}
            for b, src, dst, val, gas, gp in mine:
                if dst == m:
                    rows.append((b, swap[src], c, val, gas, gp))
                else:
                    rows.append((b, c, dst, val, gas, gp))

    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    txs = [
        Transaction(b, addrs[s], addrs[d], v, g, gp,
                    "0x" + hashlib.sha256(f"tx:{seed}:{k}".encode()).hexdigest())
        for k, (b, s, d, v, g, gp) in enumerate(rows)
    ]
    return txs, labels


def write_corpus(out_dir, n_accounts=1000, seed=7, prefix="fixture", **kwargs):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    txs, labels = generate_corpus(n_accounts=n_accounts, seed=seed, **kwargs)
    tx_path, lab_path = out / f"{prefix}_transactions.csv", out / f"{prefix}_labels.csv"
    with open(tx_path, "w", newline="", encoding="utf-8") as fh:
        write_transactions(txs, fh)
    with open(lab_path, "w", newline="", encoding="utf-8") as fh:
        write_labels(labels, fh)
    return tx_path, lab_path


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=".")
    ap.add_argument("--accounts", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--prefix", default="fixture")
    a = ap.parse_args(argv)
    for p in write_corpus(a.out, a.accounts, a.seed, a.prefix):
        print(p)


if __name__ == "__main__":
    main()
