"""Key/value configuration for the device service and CLI.

Grammar (TOML-like, intentionally small):

    # comment
    store.path = "/var/lib/parascope"
    detector.backend = "heuristic"
    pipeline.malaria_threshold = 0.8
    server.port = 8077
    camera.kind = "directory-replay"

One dotted key per line, ``key = value``; values are double-quoted
strings, integers, floats, or true/false. Flags given on the command
line override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import BadConfig

KNOWN_KEYS = {
    "store.path": str,
    "detector.backend": str,
    "classifier.backend": str,
    "pipeline.malaria_threshold": float,
    "detector.score_floor": float,
    "detector.nms_iou": float,
    "sync.endpoint": str,
    "sync.token": str,
    "camera.kind": str,
    "camera.path": str,
    "server.port": int,
    "server.assets": str,
    "fixtures.path": str,
    "detector.command": str,
    "classifier.command": str,
}

DEFAULTS = {
    "store.path": "./parascope-store",
    "detector.backend": "heuristic",
    "classifier.backend": "heuristic",
    "pipeline.malaria_threshold": 0.80,
    "detector.score_floor": 0.25,
    "detector.nms_iou": 0.45,
    "sync.endpoint": "",
    "sync.token": "",
    "camera.kind": "directory-replay",
    "camera.path": "",
    "server.port": 8077,
    "server.assets": "",
    "fixtures.path": "",
    "detector.command": "",
    "classifier.command": "",
}


def _parse_value(raw: str, lineno: int):
    raw = raw.strip()
    if raw.startswith('"'):
        if not raw.endswith('"') or len(raw) < 2:
            raise BadConfig(f"line {lineno}: unterminated string")
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise BadConfig(f"line {lineno}: cannot parse value {raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise BadConfig(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise BadConfig(f"line {lineno}: unknown key {key!r}")
        value = _parse_value(raw, lineno)
        expected = KNOWN_KEYS[key]
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, expected) or isinstance(value, bool) and expected is not bool:
            raise BadConfig(
                f"line {lineno}: {key} expects {expected.__name__}, got {value!r}"
            )
        values[key] = value
    return values


@dataclass
class AppConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "AppConfig":
        merged = dict(DEFAULTS)
        if path:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise BadConfig(f"cannot read config {path}: {exc}") from exc
            merged.update(parse_config_text(text))
        for key, value in (overrides or {}).items():
            if value is not None:
                if key not in KNOWN_KEYS:
                    raise BadConfig(f"unknown config key {key!r}")
                merged[key] = value
        return cls(merged)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)
