"""Local persistence: content-addressed blobs plus an append-only journal.

Layout: ``<root>/blobs/<2-hex-prefix>/<sha256>`` and
``<root>/journal.jsonl``. Blobs are written and fsynced before their
journal line is appended, so a crash can truncate the journal but never
leave a parseable line pointing at a missing blob. Record updates append
new lines; the latest line per record_id wins on replay.
"""

from __future__ import annotations

import errno
import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from ._rng import SplitMix64
from .codecs import encode_png
from .errors import IoFailure, StorageFull
from .imaging import RasterImage
from .pipeline import ScreeningResult, canonical_json

APP_VERSION = "0.1.0"

SYNC_STATES = ("Pending", "Uploading", "Synced", "Failed")
_ALLOWED_TRANSITIONS = {
    ("Pending", "Uploading"),
    ("Uploading", "Synced"),
    ("Uploading", "Failed"),
    ("Failed", "Uploading"),
}


@dataclass(frozen=True)
class SyncState:
    state: str = "Pending"
    attempts: int = 0
    last_error: str | None = None
    next_retry_at: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "state": self.state, "attempts": self.attempts,
            "last_error": self.last_error, "next_retry_at": self.next_retry_at,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SyncState":
        return cls(doc["state"], doc.get("attempts", 0),
                   doc.get("last_error"), doc.get("next_retry_at"))


@dataclass(frozen=True)
class SlideRecord:
    record_id: str
    device_id: str
    created_at: str          # RFC 3339 UTC
    slide_blob: str          # sha256 hex
    crop_blobs: tuple        # sha256 hex per classified crop
    overlay_blob: str | None
    result: dict             # ScreeningResult JSON document
    sync_state: SyncState = field(default_factory=SyncState)
    app_version: str = APP_VERSION

    def blob_refs(self) -> list[str]:
        refs = [self.slide_blob, *self.crop_blobs]
        if self.overlay_blob:
            refs.append(self.overlay_blob)
        return refs

    def to_json_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "device_id": self.device_id,
            "created_at": self.created_at,
            "slide_blob": self.slide_blob,
            "crop_blobs": list(self.crop_blobs),
            "overlay_blob": self.overlay_blob,
            "result": self.result,
            "sync_state": self.sync_state.to_json_dict(),
            "app_version": self.app_version,
        }

    def upload_document(self) -> dict:
        """Wire-format document: volatile sync state stays local; the
        reserved consent field ships unpopulated."""
        return {
            "record_id": self.record_id,
            "device_id": self.device_id,
            "created_at": self.created_at,
            "slide_blob": self.slide_blob,
            "crop_blobs": list(self.crop_blobs),
            "overlay_blob": self.overlay_blob,
            "result": self.result,
            "app_version": self.app_version,
            "consent": None,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SlideRecord":
        return cls(
            record_id=doc["record_id"],
            device_id=doc["device_id"],
            created_at=doc["created_at"],
            slide_blob=doc["slide_blob"],
            crop_blobs=tuple(doc.get("crop_blobs", [])),
            overlay_blob=doc.get("overlay_blob"),
            result=doc["result"],
            sync_state=SyncState.from_json_dict(doc.get("sync_state", {"state": "Pending"})),
            app_version=doc.get("app_version", APP_VERSION),
        )


def _utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds") \
        .replace("+00:00", "Z")


def _seeded_uuid4_factory(seed: int):
    rng = SplitMix64(seed)

    def factory() -> str:
        raw = b"".join(rng.next_u64().to_bytes(8, "big") for _ in range(2))
        return str(uuid.UUID(bytes=raw, version=4))

    return factory


def _default_clock():
    fixed = os.environ.get("PARASCOPE_FIXED_TIME")
    if fixed:
        return lambda: fixed
    return _utc_now_rfc3339


def _default_id_factory():
    seed = os.environ.get("PARASCOPE_ID_SEED")
    if seed:
        return _seeded_uuid4_factory(int(seed))
    return lambda: str(uuid.uuid4())


def _wrap_os_error(exc: OSError, action: str):
    if exc.errno == errno.ENOSPC:
        raise StorageFull(f"{action}: no space left") from exc
    raise IoFailure(f"{action}: {exc}") from exc


class BlobStore:
    """Single-writer journal, concurrent readers, content-addressed blobs."""

    def __init__(self, root, device_id: str = "device-0",
                 clock=None, id_factory=None):
        self.root = Path(root)
        self.device_id = device_id
        self._clock = clock or _default_clock()
        self._id_factory = id_factory or _default_id_factory()
        self._lock = threading.Lock()
        self._cache: dict[str, SlideRecord] = {}
        self._cache_offset = 0
        try:
            (self.root / "blobs").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            _wrap_os_error(exc, f"creating store at {self.root}")

    @property
    def journal_path(self) -> Path:
        return self.root / "journal.jsonl"

    def _blob_path(self, sha: str) -> Path:
        return self.root / "blobs" / sha[:2] / sha

    # --- blobs ---

    def put_blob(self, data: bytes) -> str:
        sha = hashlib.sha256(data).hexdigest()
        path = self._blob_path(sha)
        if path.exists():
            return sha
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            _wrap_os_error(exc, f"writing blob {sha}")
        return sha

    def get_blob(self, sha: str) -> bytes:
        path = self._blob_path(sha)
        try:
            data = path.read_bytes()
        except OSError as exc:
            _wrap_os_error(exc, f"reading blob {sha}")
        if hashlib.sha256(data).hexdigest() != sha:
            raise IoFailure(f"blob {sha} failed its integrity check")
        return data

    def has_blob(self, sha: str) -> bool:
        return self._blob_path(sha).exists()

    # --- journal ---

    def _append(self, record: SlideRecord) -> None:
        line = canonical_json(record.to_json_dict()) + "\n"
        try:
            with open(self.journal_path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            _wrap_os_error(exc, "appending journal")

    def _replay(self) -> dict[str, SlideRecord]:
        """Journal state, incrementally: only bytes appended since the
        last call are re-parsed (full reload if the file shrank)."""
        if not self.journal_path.exists():
            self._cache = {}
            self._cache_offset = 0
            return self._cache
        size = self.journal_path.stat().st_size
        if size < self._cache_offset:
            self._cache = {}
            self._cache_offset = 0
        if size > self._cache_offset:
            with open(self.journal_path, "rb") as fh:
                fh.seek(self._cache_offset)
                tail = fh.read()
            last_newline = tail.rfind(b"\n")
            complete = tail[:last_newline + 1] if last_newline >= 0 else b""
            for raw_line in complete.splitlines():
                if not raw_line.strip():
                    continue
                try:
                    doc = json.loads(raw_line.decode("utf-8"))
                    record = SlideRecord.from_json_dict(doc)
                except (ValueError, KeyError):
                    continue  # torn write; blobs are already durable
                self._cache[record.record_id] = record
            self._cache_offset += len(complete)
        return self._cache

    # --- records ---

    def save_record(self, slide: RasterImage, crops=None,
                    result: ScreeningResult | None = None) -> SlideRecord:
        """Persist one screening outcome; durable before return.

        Crop and overlay blobs come from the result's attachments when
        ``crops`` is not given explicitly. Blob writes happen (and sync)
        before the journal line, never after.
        """
        if result is None:
            raise ValueError("save_record needs a ScreeningResult")
        with self._lock:
            slide_sha = self.put_blob(encode_png(slide))

            crop_refs = []
            if crops is not None:
                for crop_img in crops:
                    crop_refs.append(self.put_blob(encode_png(crop_img)))
            else:
                for cell in result.cells:
                    ref = cell.crop_ref
                    if ref is None:
                        continue
                    data = result.attachments.get(ref)
                    if data is None:
                        raise IoFailure(f"result has no attachment for crop {ref}")
                    crop_refs.append(self.put_blob(data))

            overlay_sha = None
            overlay_data = result.attachments.get(result.overlay_ref)
            if overlay_data is not None:
                overlay_sha = self.put_blob(overlay_data)

            record = SlideRecord(
                record_id=self._id_factory(),
                device_id=self.device_id,
                created_at=self._clock(),
                slide_blob=slide_sha,
                crop_blobs=tuple(crop_refs),
                overlay_blob=overlay_sha,
                result=result.to_json_dict(),
            )
            self._append(record)
            return record

    def get_record(self, record_id: str) -> SlideRecord | None:
        with self._lock:
            return self._replay().get(record_id)

    def list_records(self, state: str | None = None) -> list[SlideRecord]:
        with self._lock:
            records = sorted(
                self._replay().values(), key=lambda r: (r.created_at, r.record_id)
            )
        if state is None:
            return records
        return [r for r in records if r.sync_state.state == state]

    def list_pending(self) -> list[SlideRecord]:
        """Records awaiting upload (Pending or Failed), oldest first."""
        return [
            r for r in self.list_records()
            if r.sync_state.state in ("Pending", "Failed")
        ]

    def count_by_state(self) -> dict[str, int]:
        counts = {s: 0 for s in SYNC_STATES}
        for record in self.list_records():
            counts[record.sync_state.state] += 1
        return counts

    def update_sync_state(self, record_id: str, new_state: SyncState) -> SlideRecord:
        with self._lock:
            record = self._replay().get(record_id)
            if record is None:
                raise KeyError(record_id)
            transition = (record.sync_state.state, new_state.state)
            if transition[0] != transition[1] and transition not in _ALLOWED_TRANSITIONS:
                raise ValueError(f"illegal sync transition {transition[0]} -> {transition[1]}")
            updated = replace(record, sync_state=new_state)
            self._append(updated)
            return updated
