"""Device-facing HTTP service: capture, review, save, sync over REST.

Handlers are thin adapters: each state-changing endpoint maps 1:1 onto a
module operation (screen, save_record, sync_once) and holds no business
logic of its own. Capture is serialized per session (one slide on the
stage at a time); sync may run while captures continue thanks to the
store's single-writer journal.

Unsaved results do not survive a restart; the discard is logged.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import __version__
from .classify import (
    CLASSIFIER_KINDS,
    ExternalParasiteClassifier,
    HeuristicParasiteClassifier,
    OracleParasiteClassifier,
)
from .codecs import encode_png, load_image
from .config import AppConfig
from .datasets import parse_voc_xml
from .detect import (
    DETECTOR_KINDS,
    ExternalCellDetector,
    HeuristicCellDetector,
    OracleCellDetector,
)
from .errors import (
    BackendUnavailable,
    BadConfig,
    EndOfFrames,
    EndpointUnreachable,
    ParascopeError,
    PortInUse,
)
from .imaging import RasterImage
from .pipeline import MalariaScreener, ScreeningResult
from .server import _QuietThreadingHTTPServer
from .store import BlobStore
from .sync import SyncClient, sync_once
from .synthetic import parse_labels_sidecar

log = logging.getLogger("parascope.service")


class CameraSource:
    """Frame supplier. peek() shows the frame capture would consume."""

    def peek(self):
        raise NotImplementedError

    def advance(self):
        raise NotImplementedError


class DirectoryReplayCamera(CameraSource):
    """Replays image files from a directory in lexicographic order."""

    def __init__(self, path):
        self.root = Path(path)
        if not self.root.is_dir():
            raise BadConfig(f"camera path {path} is not a directory")
        self.frames = sorted(
            p for p in self.root.iterdir()
            if p.suffix.lower() in (".ppm", ".png")
        )
        self.cursor = 0

    def peek(self) -> tuple[str, RasterImage]:
        if self.cursor >= len(self.frames):
            raise EndOfFrames("camera directory exhausted")
        path = self.frames[self.cursor]
        return path.stem, load_image(path)

    def advance(self) -> tuple[str, RasterImage]:
        key, img = self.peek()
        self.cursor += 1
        return key, img


class SingleFileCamera(DirectoryReplayCamera):
    """One fixed frame, consumable once."""

    def __init__(self, path):
        p = Path(path)
        if not p.is_file():
            raise BadConfig(f"camera path {path} is not a file")
        self.root = p.parent
        self.frames = [p]
        self.cursor = 0


def make_camera(config: AppConfig) -> CameraSource:
    kind = config["camera.kind"]
    if kind == "directory-replay":
        return DirectoryReplayCamera(config["camera.path"])
    if kind == "single-file":
        return SingleFileCamera(config["camera.path"])
    if kind == "live-device":
        raise BadConfig(
            "live-device capture is feature-gated; wire a CameraSource in code"
        )
    raise BadConfig(f"unknown camera.kind {kind!r}")


def make_backends(config: AppConfig, key: str | None):
    """Build (detector, classifier) for one capture.

    Oracle backends need per-frame fixtures: <fixtures.path>/<key>.xml for
    detection ground truth and <key>.labels.json for infection labels.
    """
    det_kind = config["detector.backend"]
    cls_kind = config["classifier.backend"]
    if det_kind not in DETECTOR_KINDS:
        raise BadConfig(f"unknown detector.backend {det_kind!r}")
    if cls_kind not in CLASSIFIER_KINDS:
        raise BadConfig(f"unknown classifier.backend {cls_kind!r}")

    fixtures = Path(config["fixtures.path"]) if config["fixtures.path"] else None

    if det_kind == "oracle":
        if fixtures is None or key is None:
            raise BadConfig("oracle detector needs fixtures.path and a frame key")
        xml_path = fixtures / f"{key}.xml"
        if not xml_path.is_file():
            raise BadConfig(f"no detection fixture {xml_path}")
        annotated = parse_voc_xml(xml_path.read_bytes())
        detector = OracleCellDetector(
            objects=list(annotated.objects),
            image_size=(annotated.width, annotated.height),
        )
    elif det_kind == "external":
        detector = ExternalCellDetector(command=config["detector.command"] or None)
    else:
        detector = HeuristicCellDetector()

    if cls_kind == "oracle":
        if fixtures is None or key is None:
            raise BadConfig("oracle classifier needs fixtures.path and a frame key")
        labels_path = fixtures / f"{key}.labels.json"
        if not labels_path.is_file():
            raise BadConfig(f"no label fixture {labels_path}")
        doc = json.loads(labels_path.read_text(encoding="utf-8"))
        classifier = OracleParasiteClassifier(labeled_boxes=parse_labels_sidecar(doc))
    elif cls_kind == "external":
        classifier = ExternalParasiteClassifier(command=config["classifier.command"] or None)
    else:
        classifier = HeuristicParasiteClassifier()

    return detector, classifier


def make_screener(config: AppConfig, detector, classifier) -> MalariaScreener:
    return MalariaScreener(
        detector=detector,
        classifier=classifier,
        malaria_threshold=config["pipeline.malaria_threshold"],
        score_floor=config["detector.score_floor"],
        nms_iou=config["detector.nms_iou"],
    )


class DeviceSession:
    """Mutable per-device session: preview cursor, last result, sync badge."""

    def __init__(self, config: AppConfig, store: BlobStore, camera: CameraSource):
        self.config = config
        self.store = store
        self.camera = camera
        self.capture_lock = threading.Lock()
        self.last_result: ScreeningResult | None = None
        self.last_slide: RasterImage | None = None
        self.unsaved = False
        self.frame_cache: dict[str, bytes] = {}

    def preview_png(self) -> bytes:
        _, frame = self.camera.peek()
        return encode_png(frame)

    def capture(self) -> dict:
        with self.capture_lock:
            key, frame = self.camera.advance()
            detector, classifier = make_backends(self.config, key)
            screener = make_screener(self.config, detector, classifier)
            result = screener.screen(frame, key=key)
            self.last_result = result
            self.last_slide = frame
            self.unsaved = True
            self.frame_cache = dict(result.attachments)
            doc = result.to_json_dict()
            return {"frame": key, "result": doc, "overlay": result.overlay_ref}

    def save(self) -> dict:
        with self.capture_lock:
            if self.last_result is None or not self.unsaved:
                raise EndOfFrames("no unsaved result to store")
            record = self.store.save_record(self.last_slide, None, self.last_result)
            self.unsaved = False
            return record.to_json_dict()

    def frame_bytes(self, ref: str) -> bytes | None:
        data = self.frame_cache.get(ref)
        if data is not None:
            return data
        if self.store.has_blob(ref):
            return self.store.get_blob(ref)
        return None

    def session_doc(self) -> dict:
        counts = self.store.count_by_state()
        exhausted = False
        try:
            self.camera.peek()
        except EndOfFrames:
            exhausted = True
        return {
            "has_result": self.last_result is not None,
            "unsaved": self.unsaved,
            "preview_available": not exhausted,
            "sync": {
                "pending": counts["Pending"] + counts["Failed"],
                "synced": counts["Synced"],
                "failed": counts["Failed"],
            },
        }

    def sync(self) -> dict:
        endpoint = self.config["sync.endpoint"]
        if not endpoint:
            raise BadConfig("sync.endpoint is not configured")
        client = SyncClient(endpoint, token=self.config["sync.token"] or None)
        report = sync_once(self.store, client)
        return report.to_json_dict()


class _DeviceHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = f"parascope-device/{__version__}"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.command, fmt % args)

    @property
    def session(self) -> DeviceSession:
        return self.server.session

    def _reply_json(self, status: int, doc) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _reply_bytes(self, data: bytes, content_type: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_json(self):
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            return json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            raise ValueError("request body is not valid JSON") from None

    def _serve_static(self, path: str) -> bool:
        assets = self.server.assets_dir
        if not assets:
            return False
        rel = "index.html" if path in ("/", "") else path.lstrip("/")
        target = (assets / rel).resolve()
        if not str(target).startswith(str(assets.resolve())) or not target.is_file():
            return False
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self._reply_bytes(target.read_bytes(), ctype)
        return True

    def do_GET(self):
        try:
            parsed = urlparse(self.path)
            route = parsed.path
            if route == "/v1/health":
                return self._reply_json(200, {"status": "ok", "version": __version__})
            if route == "/v1/preview":
                try:
                    return self._reply_bytes(self.session.preview_png(), "image/png")
                except EndOfFrames as exc:
                    return self._reply_json(409, {"error": "EndOfFrames",
                                                  "detail": str(exc)})
            if route.startswith("/v1/frames/"):
                ref = route.rsplit("/", 1)[1]
                data = self.session.frame_bytes(ref)
                if data is None:
                    return self._reply_json(404, {"error": "unknown frame"})
                return self._reply_bytes(data, "image/png")
            if route == "/v1/records":
                params = parse_qs(parsed.query)
                state = params.get("state", [None])[0]
                records = self.session.store.list_records(state=state)
                return self._reply_json(
                    200, {"records": [r.to_json_dict() for r in records]}
                )
            if route.startswith("/v1/records/"):
                record = self.session.store.get_record(route.rsplit("/", 1)[1])
                if record is None:
                    return self._reply_json(404, {"error": "unknown record"})
                return self._reply_json(200, record.to_json_dict())
            if route == "/v1/session":
                return self._reply_json(200, self.session.session_doc())
            if self._serve_static(route):
                return None
            return self._reply_json(404, {"error": "no such route"})
        except ParascopeError as exc:
            return self._reply_json(500, {"error": type(exc).__name__,
                                          "detail": str(exc)})
        except Exception as exc:  # pragma: no cover - last-ditch guard
            log.exception("GET %s failed", self.path)
            return self._reply_json(500, {"error": "internal", "detail": str(exc)})

    def do_POST(self):
        try:
            try:
                self._read_json()
            except ValueError as exc:
                return self._reply_json(400, {"error": "bad request",
                                              "detail": str(exc)})
            route = urlparse(self.path).path
            if route == "/v1/capture":
                try:
                    return self._reply_json(200, self.session.capture())
                except EndOfFrames as exc:
                    return self._reply_json(409, {"error": "EndOfFrames",
                                                  "detail": str(exc)})
                except (BadConfig, BackendUnavailable) as exc:
                    return self._reply_json(500, {"error": type(exc).__name__,
                                                  "detail": str(exc)})
            if route == "/v1/records":
                try:
                    return self._reply_json(201, self.session.save())
                except EndOfFrames as exc:
                    return self._reply_json(409, {"error": "NothingToSave",
                                                  "detail": str(exc)})
            if route == "/v1/sync":
                try:
                    return self._reply_json(200, self.session.sync())
                except EndpointUnreachable as exc:
                    return self._reply_json(502, {"error": "EndpointUnreachable",
                                                  "detail": str(exc)})
                except BadConfig as exc:
                    return self._reply_json(400, {"error": "BadConfig",
                                                  "detail": str(exc)})
            return self._reply_json(404, {"error": "no such route"})
        except ParascopeError as exc:
            return self._reply_json(500, {"error": type(exc).__name__,
                                          "detail": str(exc)})
        except Exception as exc:  # pragma: no cover - last-ditch guard
            log.exception("POST %s failed", self.path)
            return self._reply_json(500, {"error": "internal", "detail": str(exc)})


class DeviceServer:
    """The running HTTP service; wraps ThreadingHTTPServer for embedding."""

    def __init__(self, config: AppConfig, host: str = "127.0.0.1",
                 camera: CameraSource | None = None,
                 store: BlobStore | None = None):
        store = store or BlobStore(config["store.path"])
        camera = camera or make_camera(config)
        if store.list_records():
            log.info("store has %d records from previous sessions",
                     len(store.list_records()))
        log.info("unsaved results from previous sessions are discarded on restart")
        self.session = DeviceSession(config, store, camera)
        try:
            self._httpd = _QuietThreadingHTTPServer(
                (host, config["server.port"]), _DeviceHandler)
        except OSError as exc:
            raise PortInUse(
                f"cannot bind {host}:{config['server.port']}: {exc}"
            ) from exc
        self._httpd.session = self.session
        assets = config["server.assets"]
        self._httpd.assets_dir = Path(assets) if assets else None
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "DeviceServer":
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


def serve(config: AppConfig, host: str = "127.0.0.1", block: bool = True):
    server = DeviceServer(config, host=host)
    if block:
        log.info("device service listening on %s", server.endpoint)
        server.serve_forever()
    return server
