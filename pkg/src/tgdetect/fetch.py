"""Offline-friendly client for Etherscan-style ``txlist`` endpoints.

Every page response is stored verbatim under ``cache_dir`` as one file per
(account, page) pair, so a crawl can be replayed without network access.
"""
from __future__ import annotations

import json
import re
import threading
import time
from pathlib import Path

import requests

from .errors import MalformedResponse, NetworkError, RateLimited
from .ingest import Transaction

ETHERSCAN_API = "https://api.etherscan.io/api"

# one lock + last-request timestamp per endpoint, shared by all clients
_endpoint_locks: dict[str, threading.Lock] = {}
_endpoint_last: dict[str, float] = {}
_registry_lock = threading.Lock()


def _lock_for(endpoint):
    with _registry_lock:
        return _endpoint_locks.setdefault(endpoint, threading.Lock())


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def record_to_transaction(rec: dict) -> Transaction:
    try:
        dst = rec.get("to") or rec.get("contractAddress") or ""
        return Transaction(
            block_number=int(rec["blockNumber"]),
            source=str(rec["from"]),
            destination=str(dst),
            value=int(rec["value"]),
            gas=int(rec["gas"]),
            gas_price=int(rec["gasPrice"]),
            tx_hash=str(rec.get("hash", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"bad transaction record: {exc}") from None


class EtherscanClient:
    """Paged, cached ``account/txlist`` client.

    Parameters
    ----------
    endpoint : str
        API base URL.
    cache_dir : path
        Directory holding raw responses.
    api_key : str, optional
    page_size : int
        Records per page (Etherscan's ``offset``).
    min_interval : float
        Minimum seconds between two requests to the same endpoint.
    offline : bool
        Serve from cache only; a cache miss raises ``NetworkError``.
    """

    def __init__(self, endpoint=ETHERSCAN_API, cache_dir=".tx_cache", api_key="",
                 page_size=1000, min_interval=0.2, offline=False, timeout=30.0,
                 session=None):
        self.endpoint = endpoint
        self.cache_dir = Path(cache_dir)
        self.api_key = api_key
        self.page_size = page_size
        self.min_interval = min_interval
        self.offline = offline
        self.timeout = timeout
        self.session = session or requests.Session()
        self.requests_made = 0

    def cache_path(self, account: str, cursor: int) -> Path:
        return self.cache_dir / f"{_safe(account)}__{int(cursor)}.json"

    def _request(self, account, cursor) -> bytes:
        params = {
            "module": "account", "action": "txlist", "address": account,
            "startblock": 0, "endblock": 99999999, "page": cursor,
            "offset": self.page_size, "sort": "asc",
        }
        if self.api_key:
            params["apikey"] = self.api_key
        lock = _lock_for(self.endpoint)
        with lock:
            wait = _endpoint_last.get(self.endpoint, 0.0) + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                resp = self.session.get(self.endpoint, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                raise NetworkError(f"{self.endpoint}: {exc}") from None
            finally:
                _endpoint_last[self.endpoint] = time.monotonic()
            self.requests_made += 1
        if resp.status_code == 429:
            retry = resp.headers.get("Retry-After")
            raise RateLimited(
                f"{self.endpoint}: HTTP 429",
                retry_after=float(retry) if retry and retry.replace(".", "", 1).isdigit() else self.min_interval * 5,
            )
        if resp.status_code != 200:
            raise NetworkError(f"{self.endpoint}: HTTP {resp.status_code}")
        return resp.content

    @staticmethod
    def _decode(raw: bytes) -> list[Transaction]:
        try:
            payload = json.loads(raw)
        except (ValueError, UnicodeDecodeError):
            raise MalformedResponse("response is not JSON") from None
        if not isinstance(payload, dict) or "result" not in payload:
            raise MalformedResponse("response lacks 'result'")
        result = payload["result"]
        if isinstance(result, str):
            if "rate limit" in result.lower():
                raise RateLimited(result, retry_after=1.0)
            if payload.get("status") == "0" and "no transactions" in str(payload.get("message", "")).lower():
                return []
            raise MalformedResponse(f"unexpected result: {result[:200]}")
        if not isinstance(result, list):
            raise MalformedResponse("'result' is not a list")
        return [record_to_transaction(r) for r in result]

    def fetch_transactions(self, account: str, cursor: int = 1) -> list[Transaction]:
        """Return one page (1-based ``cursor``) of the account's external transactions."""
        path = self.cache_path(account, cursor)
        if path.exists():
            return self._decode(path.read_bytes())
        if self.offline:
            raise NetworkError(f"offline and no cached page for {account} page {cursor}")
        raw = self._request(account, cursor)
        txs = self._decode(raw)  # validate before caching
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(raw)
        tmp.replace(path)
        return txs

    def fetch_all(self, account: str, max_pages: int = 10_000) -> list[Transaction]:
        """Walk pages until a short page comes back."""
        out: list[Transaction] = []
        for cursor in range(1, max_pages + 1):
            page = self.fetch_transactions(account, cursor)
            out.extend(page)
            if len(page) < self.page_size:
                break
        out.sort(key=lambda t: t.block_number)
        return out


def fetch_transactions(endpoint, account, cursor=1, **kwargs) -> list[Transaction]:
    return EtherscanClient(endpoint, **kwargs).fetch_transactions(account, cursor)
