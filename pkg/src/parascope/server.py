"""Reference cloud endpoint for synchronization testing and small deployments.

Implements the wire protocol: content-addressed blob PUTs, record PUTs
idempotent by record_id (duplicate PUTs answer 409 with a stored-hash
echo so clients can distinguish replay from conflict), record GETs, and
a health probe. State persists under a directory with atomic writes.

A fault hook (used by the durability test suite) can drop connections or
inject 500s before or after the side effect, which is exactly the failure
surface an at-least-once client has to converge through.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import PortInUse

FAULT_NONE = None
FAULT_DROP = "drop"
FAULT_500_BEFORE = "500-before"
FAULT_500_AFTER = "500-after"
FAULT_STALL = "stall"  # sleep past the client timeout, then process normally


class _QuietThreadingHTTPServer(ThreadingHTTPServer):
    """Swallows disconnect noise: timed-out clients abandon sockets
    mid-response under fault injection, which is expected, not an error."""

    def handle_error(self, request, client_address):
        import sys
        exc = sys.exc_info()[1]
        if isinstance(exc, (BrokenPipeError, ConnectionResetError)):
            return
        super().handle_error(request, client_address)


class ReferenceServerState:
    def __init__(self, state_dir, token: str | None = None):
        self.root = Path(state_dir)
        (self.root / "blobs").mkdir(parents=True, exist_ok=True)
        (self.root / "records").mkdir(parents=True, exist_ok=True)
        self.token = token
        self.lock = threading.Lock()
        self.fault_hook = None          # callable(seq, method, path) -> fault
        self.request_seq = 0
        self.stall_seconds = 0.08

    def blob_path(self, sha: str) -> Path:
        return self.root / "blobs" / sha[:2] / sha

    def record_path(self, record_id: str) -> Path:
        return self.root / "records" / f"{record_id}.json"

    def put_blob(self, sha: str, data: bytes) -> bool:
        """Returns True if newly created."""
        path = self.blob_path(sha)
        with self.lock:
            if path.exists():
                return False
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
            return True

    def put_record(self, record_id: str, body: bytes):
        """Returns ("created", None) or ("duplicate", stored body bytes)."""
        path = self.record_path(record_id)
        with self.lock:
            if path.exists():
                return "duplicate", path.read_bytes()
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(body)
            os.replace(tmp, path)
            return "created", None

    def get_record(self, record_id: str) -> bytes | None:
        path = self.record_path(record_id)
        with self.lock:
            return path.read_bytes() if path.exists() else None

    def manifest_digest(self) -> str:
        """Digest of every stored byte; byte-identical states compare equal."""
        digest = hashlib.sha256()
        for path in sorted(self.root.rglob("*")):
            if path.is_file() and not path.name.endswith(".tmp"):
                digest.update(str(path.relative_to(self.root)).encode())
                digest.update(path.read_bytes())
        return digest.hexdigest()


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "parascope-cloud/0.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    @property
    def state(self) -> ReferenceServerState:
        return self.server.state

    def _fault(self) -> str | None:
        hook = self.state.fault_hook
        if hook is None:
            return None
        with self.state.lock:
            self.state.request_seq += 1
            seq = self.state.request_seq
        return hook(seq, self.command, self.path)

    def _reply(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _drop(self) -> None:
        try:
            self.connection.close()
        except OSError:
            pass
        self.close_connection = True

    def _authorized(self) -> bool:
        if not self.state.token:
            return True
        return self.headers.get("Authorization") == f"Bearer {self.state.token}"

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length) if length else b""

    def do_GET(self):
        fault = self._fault()
        if fault == FAULT_DROP:
            return self._drop()
        if fault == FAULT_STALL:
            time.sleep(self.state.stall_seconds)
        elif fault in (FAULT_500_BEFORE, FAULT_500_AFTER):
            return self._reply(500, {"error": "injected"})
        if self.path == "/v1/health":
            return self._reply(200, {"status": "ok"})  # health needs no auth
        if not self._authorized():
            return self._reply(401, {"error": "unauthorized"})
        if self.path.startswith("/v1/records/"):
            record_id = self.path.rsplit("/", 1)[1]
            body = self.state.get_record(record_id)
            if body is None:
                return self._reply(404, {"error": "not found"})
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return None
        return self._reply(404, {"error": "no such route"})

    def do_PUT(self):
        fault = self._fault()
        if fault == FAULT_DROP:
            self._read_body()
            return self._drop()
        if fault == FAULT_STALL:
            # The response will be lost to the client's timeout, but the
            # effect below still happens: the at-least-once worst case.
            time.sleep(self.state.stall_seconds)
        elif fault == FAULT_500_BEFORE:
            self._read_body()
            return self._reply(500, {"error": "injected before effect"})
        if not self._authorized():
            self._read_body()
            return self._reply(401, {"error": "unauthorized"})

        body = self._read_body()
        if self.path.startswith("/v1/blobs/"):
            sha = self.path.rsplit("/", 1)[1]
            if hashlib.sha256(body).hexdigest() != sha:
                return self._reply(400, {"error": "content does not match hash"})
            created = self.state.put_blob(sha, body)
            if fault == FAULT_500_AFTER:
                return self._reply(500, {"error": "injected after effect"})
            return self._reply(201 if created else 200,
                               {"sha256": sha, "status": "created" if created else "exists"})

        if self.path.startswith("/v1/records/"):
            record_id = self.path.rsplit("/", 1)[1]
            try:
                doc = json.loads(body.decode("utf-8"))
            except ValueError:
                return self._reply(400, {"error": "body is not JSON"})
            if doc.get("record_id") != record_id:
                return self._reply(400, {"error": "record_id mismatch"})
            missing = [
                sha for sha in ([doc.get("slide_blob")] if doc.get("slide_blob") else [])
                + list(doc.get("crop_blobs") or [])
                + ([doc.get("overlay_blob")] if doc.get("overlay_blob") else [])
                if not self.state.blob_path(sha).exists()
            ]
            if missing:
                return self._reply(400, {"error": "missing blobs", "blobs": missing})
            outcome, stored = self.state.put_record(record_id, body)
            if outcome == "duplicate":
                stored_sha = hashlib.sha256(stored).hexdigest()
                request_sha = hashlib.sha256(body).hexdigest()
                return self._reply(409, {
                    "record_id": record_id,
                    "stored_sha256": stored_sha,
                    "request_sha256": request_sha,
                    "match": stored_sha == request_sha,
                })
            if fault == FAULT_500_AFTER:
                return self._reply(500, {"error": "injected after effect"})
            return self._reply(201, {"record_id": record_id, "status": "created"})

        return self._reply(404, {"error": "no such route"})


class ReferenceServer:
    """Threaded reference endpoint; start()/stop() for embedding in tests."""

    def __init__(self, state_dir, host: str = "127.0.0.1", port: int = 0,
                 token: str | None = None):
        self.state = ReferenceServerState(state_dir, token=token)
        try:
            self._httpd = _QuietThreadingHTTPServer((host, port), _Handler)
        except OSError as exc:
            raise PortInUse(f"cannot bind {host}:{port}: {exc}") from exc
        self._httpd.state = self.state
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ReferenceServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._httpd.serve_forever()
