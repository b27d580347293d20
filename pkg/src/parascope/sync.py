"""Opportunistic, idempotent cloud synchronization.

One sync run probes the endpoint, walks pending records oldest-first in
batches, uploads each record's blobs then its document, and maps the
response onto the record's sync state. Everything is at-least-once with
idempotent effect: replays and retries can only converge the server
toward exactly one copy per record and blob.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import requests

from ._rng import SplitMix64
from .errors import EndpointUnreachable
from .store import BlobStore, SlideRecord, SyncState

TOKEN_ENV = "MAISCOPE_SYNC_TOKEN"

BACKOFF_BASE_S = 2.0
BACKOFF_FACTOR = 2.0
BACKOFF_CAP_S = 300.0
BACKOFF_JITTER = 0.20


@dataclass(frozen=True)
class SyncReport:
    uploaded: int
    failed: int
    skipped: int

    def to_json_dict(self) -> dict:
        return {"uploaded": self.uploaded, "failed": self.failed,
                "skipped": self.skipped}


class TransportFailure(Exception):
    """A request could not be completed after in-run retries."""


class SyncClient:
    """Thin HTTP client for the cloud wire protocol.

    Idempotent PUTs get a small bounded in-run retry (network flaps and
    5xx responses); a record only transitions to Failed when its
    requests stay broken for a whole run.
    """

    def __init__(self, endpoint: str, token: str | None = None,
                 timeout: float = 10.0, transport_retries: int = 3,
                 session=None):
        self.endpoint = endpoint.rstrip("/")
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.timeout = timeout
        self.transport_retries = transport_retries
        self._session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def _request(self, method: str, path: str, **kwargs):
        last_exc = None
        for _ in range(max(1, self.transport_retries)):
            try:
                resp = self._session.request(
                    method, self.endpoint + path,
                    headers=self._headers(), timeout=self.timeout, **kwargs,
                )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = TransportFailure(f"{method} {path} -> {resp.status_code}")
                continue
            return resp
        raise TransportFailure(f"{method} {path} failed: {last_exc}")

    def health(self) -> None:
        try:
            resp = self._session.get(
                self.endpoint + "/v1/health",
                headers=self._headers(), timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise EndpointUnreachable(f"{self.endpoint}: {exc}") from exc
        if resp.status_code != 200:
            raise EndpointUnreachable(
                f"{self.endpoint}: health returned {resp.status_code}"
            )

    def put_blob(self, sha: str, data: bytes) -> None:
        resp = self._request("PUT", f"/v1/blobs/{sha}", data=data)
        if resp.status_code not in (200, 201):
            raise TransportFailure(f"blob {sha} rejected: {resp.status_code}")

    def put_record(self, document: dict) -> tuple[str, dict]:
        """Returns ("created"|"exists"|"conflict", response json)."""
        body = json.dumps(document, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
        resp = self._request(
            "PUT", f"/v1/records/{document['record_id']}", data=body,
        )
        if resp.status_code == 201:
            return "created", _safe_json(resp)
        if resp.status_code == 409:
            doc = _safe_json(resp)
            return ("exists" if doc.get("match") else "conflict"), doc
        raise TransportFailure(f"record PUT -> {resp.status_code}")

    def get_record(self, record_id: str) -> dict | None:
        resp = self._request("GET", f"/v1/records/{record_id}")
        if resp.status_code == 404:
            return None
        return _safe_json(resp)


def _safe_json(resp) -> dict:
    try:
        return resp.json()
    except ValueError:
        return {}


def _backoff_delay(record_id: str, attempts: int) -> float:
    """Deterministic exponential backoff with +/-20% jitter."""
    base = min(BACKOFF_BASE_S * (BACKOFF_FACTOR ** max(0, attempts - 1)),
               BACKOFF_CAP_S)
    seed = int.from_bytes(
        hashlib.sha256(f"{record_id}:{attempts}".encode()).digest()[:8], "big"
    )
    jitter = 1.0 + BACKOFF_JITTER * (2.0 * SplitMix64(seed).random() - 1.0)
    return min(base * jitter, BACKOFF_CAP_S)


def _parse_rfc3339(value: str) -> datetime:
    return datetime.fromisoformat(value.replace("Z", "+00:00"))


def _sync_one(store: BlobStore, client: SyncClient, record: SlideRecord,
              now: datetime) -> str:
    store.update_sync_state(record.record_id, SyncState(
        "Uploading", record.sync_state.attempts, None, None))
    try:
        for sha in record.blob_refs():
            client.put_blob(sha, store.get_blob(sha))
        outcome, _ = client.put_record(record.upload_document())
    except (TransportFailure, EndpointUnreachable) as exc:
        attempts = record.sync_state.attempts + 1
        retry_at = now + timedelta(seconds=_backoff_delay(record.record_id, attempts))
        store.update_sync_state(record.record_id, SyncState(
            "Failed", attempts, str(exc),
            retry_at.isoformat(timespec="seconds").replace("+00:00", "Z")))
        return "failed"
    if outcome in ("created", "exists"):
        store.update_sync_state(record.record_id, SyncState(
            "Synced", record.sync_state.attempts, None, None))
        return "uploaded"
    # Content conflict: never overwrite clinical data; park for review.
    attempts = record.sync_state.attempts + 1
    store.update_sync_state(record.record_id, SyncState(
        "Failed", attempts,
        "content conflict at server; manual review required", None))
    return "failed"


def sync_once(store: BlobStore, client: SyncClient,
              batch_size: int = 16, parallelism: int = 2,
              respect_backoff: bool = True, now: datetime | None = None) -> SyncReport:
    """One synchronization pass over the store's pending records.

    Raises EndpointUnreachable (no state changes) when the endpoint
    cannot be contacted at all; per-record faults mid-run mark only that
    record Failed and do not block the rest of the batch.
    """
    client.health()
    now = now or datetime.now(timezone.utc)

    # A crash mid-upload strands records in Uploading; park them as Failed
    # (a legal transition) so they rejoin the pending queue immediately.
    for record in store.list_records(state="Uploading"):
        store.update_sync_state(record.record_id, SyncState(
            "Failed", record.sync_state.attempts,
            "upload interrupted; recovered at next sync", None))

    total = len(store.list_records())
    pending = store.list_pending()
    if respect_backoff:
        eligible = []
        for record in pending:
            retry_at = record.sync_state.next_retry_at
            if retry_at is None or _parse_rfc3339(retry_at) <= now:
                eligible.append(record)
        pending = eligible

    uploaded = failed = 0
    for start in range(0, len(pending), max(1, batch_size)):
        batch = pending[start:start + max(1, batch_size)]
        if parallelism > 1 and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                outcomes = list(pool.map(
                    lambda r: _sync_one(store, client, r, now), batch))
        else:
            outcomes = [_sync_one(store, client, r, now) for r in batch]
        uploaded += sum(1 for o in outcomes if o == "uploaded")
        failed += sum(1 for o in outcomes if o == "failed")

    return SyncReport(uploaded, failed, skipped=total - uploaded - failed)
