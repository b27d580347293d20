"""Blood-cell detection stage.

A detector backend turns a 320x320 RGB image into raw detections with
normalized coordinates; deterministic postprocessing (score floor,
class-wise NMS, coordinate mapping) turns those into pixel-space
detections on the original image. Three backends: oracle (ground-truth
fed), heuristic (classical segmentation), external (subprocess adapter
around a pre-trained model runtime).
"""

from __future__ import annotations

import enum
import math
import os
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .errors import BackendUnavailable, ZeroAreaBox
from .imaging import PixelBox, RasterImage, rgb_to_hsv
from .validation import check_image

INPUT_SIZE = (320, 320)

# Luminance weights (Rec. 601), used for thresholding only.
_LUMA = (0.299, 0.587, 0.114)


class CellClass(enum.IntEnum):
    """The three detectable blood components; codes are the wire format."""

    RBC = 0
    WBC = 1
    Platelet = 2

    @classmethod
    def from_name(cls, name: str) -> "CellClass":
        normalized = {"RBC": cls.RBC, "WBC": cls.WBC,
                      "Platelet": cls.Platelet, "Platelets": cls.Platelet}
        try:
            return normalized[name]
        except KeyError:
            raise KeyError(name) from None


@dataclass(frozen=True)
class RawDetection:
    """Detector output before postprocessing; box is normalized to [0,1]."""

    cell_class: CellClass
    score: float
    box: tuple[float, float, float, float]  # top, left, bottom, right

    def __post_init__(self):
        top, left, bottom, right = self.box
        if not (0.0 <= top < bottom <= 1.0 and 0.0 <= left < right <= 1.0):
            raise ValueError(f"bad normalized box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Detection:
    """Postprocessed detection in original-image pixel coordinates."""

    cell_class: CellClass
    score: float
    box: PixelBox


@dataclass(frozen=True)
class DetectorBackendDescriptor:
    name: str
    input_size: tuple[int, int]
    kind: str


def iou(a, b) -> float:
    """Intersection over union of two half-open boxes (PixelBox or 4-tuple)."""
    at, al, ab, ar = a.as_list() if isinstance(a, PixelBox) else a
    bt, bl, bb, br = b.as_list() if isinstance(b, PixelBox) else b
    area_a = (ab - at) * (ar - al)
    area_b = (bb - bt) * (br - bl)
    if area_a <= 0 or area_b <= 0:
        raise ZeroAreaBox("iou requires boxes with positive area")
    ih = min(ab, bb) - max(at, bt)
    iw = min(ar, br) - max(al, bl)
    if ih <= 0 or iw <= 0:
        return 0.0
    inter = ih * iw
    return inter / (area_a + area_b - inter)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def postprocess(
    raw: list[RawDetection],
    score_floor: float,
    nms_iou: float,
    orig_w: int,
    orig_h: int,
) -> list[Detection]:
    """Score filter, class-wise greedy NMS, and pixel-space mapping.

    NMS keeps the highest-score detection and removes same-class survivors
    with IoU strictly above ``nms_iou``; score ties break toward the
    smaller top, then smaller left edge. Normalized coordinates map to
    pixels by round-half-up and are clamped to the image; boxes that
    collapse under rounding are widened to one pixel.
    """
    if not 0.0 <= score_floor <= 1.0:
        raise ValueError("score_floor must be in [0, 1]")
    if not 0.0 < nms_iou < 1.0:
        raise ValueError("nms_iou must be in (0, 1)")

    kept: list[RawDetection] = []
    candidates = sorted(
        (d for d in raw if d.score >= score_floor),
        key=lambda d: (-d.score, d.box[0], d.box[1]),
    )
    while candidates:
        best = candidates.pop(0)
        kept.append(best)
        candidates = [
            d for d in candidates
            if d.cell_class != best.cell_class or iou(d.box, best.box) <= nms_iou
        ]

    out = []
    for d in kept:
        top, left, bottom, right = d.box
        t = _round_half_up(top * orig_h)
        l = _round_half_up(left * orig_w)
        b = _round_half_up(bottom * orig_h)
        r = _round_half_up(right * orig_w)
        if b <= t:
            b = t + 1
        if r <= l:
            r = l + 1
        t = min(max(t, 0), orig_h - 1)
        l = min(max(l, 0), orig_w - 1)
        b = min(max(b, t + 1), orig_h)
        r = min(max(r, l + 1), orig_w)
        out.append(Detection(d.cell_class, d.score, PixelBox(t, l, b, r)))
    return out


class DetectorBackend(BaseEstimator):
    """Base class: input validation plus the estimator-API surface.

    Backends are stateless (``fit`` is a no-op) and declare reentrancy;
    ``get_params``/``set_params`` come from the sklearn base.
    """

    name = "detector"
    kind = "abstract"
    reentrant = True

    def fit(self, X=None, y=None):
        return self

    def describe(self) -> DetectorBackendDescriptor:
        return DetectorBackendDescriptor(self.name, INPUT_SIZE, self.kind)

    def detect(self, image: RasterImage, key=None) -> list[RawDetection]:
        check_image(image, INPUT_SIZE)
        return self._detect(image, key)

    def _detect(self, image: RasterImage, key) -> list[RawDetection]:
        raise NotImplementedError


class OracleCellDetector(DetectorBackend):
    """Replays ground-truth annotations as detections.

    Accepts either explicit raw detections or pixel-space annotations
    (``objects`` as (CellClass, PixelBox) pairs with the originating image
    size) which are normalized on the fly. Isolates pipeline logic from
    model quality in tests and fixtures.
    """

    name = "oracle"
    kind = "oracle"

    def __init__(self, raw_detections=None, objects=None, image_size=None,
                 default_score=1.0):
        self.raw_detections = raw_detections
        self.objects = objects
        self.image_size = image_size
        self.default_score = default_score

    def _detect(self, image, key):
        if self.raw_detections is not None:
            return list(self.raw_detections)
        if self.objects is None or self.image_size is None:
            return []
        w, h = self.image_size
        out = []
        for cell_class, box in self.objects:
            norm = (box.top / h, box.left / w, box.bottom / h, box.right / w)
            out.append(RawDetection(cell_class, self.default_score, norm))
        return out


class HeuristicCellDetector(DetectorBackend):
    """Classical-segmentation stand-in for the neural detector.

    Pipeline: Rec.601 luminance -> global Otsu threshold (foreground is
    the darker, stained side) -> 8-connected component labeling ->
    per-component area and mean-color rules. Desk-scale only; the area
    thresholds are calibrated against the synthetic slide generator and
    carry no clinical meaning.
    """

    name = "heuristic"
    kind = "heuristic"

    def __init__(self, area_min=40, area_max=3000, area_wbc=1200, area_platelet=120,
                 purple_hue_lo=250.0, purple_hue_hi=330.0, purple_sat_min=0.25):
        self.area_min = area_min
        self.area_max = area_max
        self.area_wbc = area_wbc
        self.area_platelet = area_platelet
        self.purple_hue_lo = purple_hue_lo
        self.purple_hue_hi = purple_hue_hi
        self.purple_sat_min = purple_sat_min

    def _is_purple(self, mean_rgb) -> bool:
        hue, sat, _ = rgb_to_hsv(mean_rgb)
        return self.purple_hue_lo <= hue <= self.purple_hue_hi and sat >= self.purple_sat_min

    def _detect(self, image, key):
        px = image.pixels
        lum = (px[..., 0] * _LUMA[0] + px[..., 1] * _LUMA[1] + px[..., 2] * _LUMA[2])
        lum = np.floor(lum + 0.5).astype(np.int32)
        threshold = otsu_threshold(lum)
        mask = lum <= threshold

        labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=np.int8))
        out = []
        h, w = px.shape[:2]
        for idx, slc in enumerate(ndimage.find_objects(labels, count), start=1):
            if slc is None:
                continue
            component = labels[slc] == idx
            area = int(component.sum())
            box_h = slc[0].stop - slc[0].start
            box_w = slc[1].stop - slc[1].start
            mean_rgb = px[slc][component].mean(axis=0)

            purple = self._is_purple(mean_rgb)
            if area >= self.area_wbc and purple:
                cell_class = CellClass.WBC
            elif area <= self.area_platelet and purple:
                cell_class = CellClass.Platelet
            elif self.area_min <= area <= self.area_max:
                cell_class = CellClass.RBC
            else:
                continue

            score = min(max(area / (box_h * box_w), 0.0), 1.0)
            norm = (slc[0].start / h, slc[1].start / w, slc[0].stop / h, slc[1].stop / w)
            out.append(RawDetection(cell_class, score, norm))
        return out


class ExternalCellDetector(DetectorBackend):
    """Subprocess adapter for a pre-trained model runtime.

    Protocol: the command is invoked with one extra argument, the path to
    a 320x320 PPM; stdout carries one line per detection,
    ``class_id score top left bottom right`` (normalized, space-separated).
    Excluded from the deterministic test suite except for protocol tests
    against a scripted stand-in.
    """

    name = "external"
    kind = "external"
    reentrant = False

    def __init__(self, command=None, timeout=30.0):
        self.command = command
        self.timeout = timeout

    def _detect(self, image, key):
        from .codecs import encode_ppm

        if not self.command:
            raise BackendUnavailable("external detector has no command configured")
        argv = list(self.command) if isinstance(self.command, (list, tuple)) \
            else self.command.split()
        fd, path = tempfile.mkstemp(suffix=".ppm")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(encode_ppm(image))
            proc = subprocess.run(
                argv + [path], capture_output=True, text=True, timeout=self.timeout
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendUnavailable(f"external detector failed: {exc}") from exc
        finally:
            if os.path.exists(path):
                os.unlink(path)
        if proc.returncode != 0:
            raise BackendUnavailable(
                f"external detector exited {proc.returncode}: {proc.stderr.strip()}"
            )
        out = []
        for line in proc.stdout.splitlines():
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise BackendUnavailable(f"bad detector protocol line: {line!r}")
            try:
                class_id, score, top, left, bottom, right = parts
                out.append(RawDetection(
                    CellClass(int(class_id)), float(score),
                    (float(top), float(left), float(bottom), float(right)),
                ))
            except ValueError as exc:
                raise BackendUnavailable(
                    f"bad detector protocol line {line!r}: {exc}"
                ) from exc
        return out


def otsu_threshold(values: np.ndarray) -> int:
    """Otsu's threshold over integer values in [0, 255].

    Returns the bin k maximizing between-class variance for the split
    {<= k} / {> k}; ties resolve to the smallest k. A constant image
    yields k below every value minus one side, i.e. an empty foreground
    for bright-background slides.
    """
    hist = np.bincount(values.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega = np.cumsum(hist)
    mu = np.cumsum(hist * np.arange(256))
    mu_total = mu[-1]

    w0 = omega
    w1 = total - omega
    valid = (w0 > 0) & (w1 > 0)
    sigma_b = np.zeros(256)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean0 = np.where(valid, mu / np.where(w0 == 0, 1, w0), 0.0)
        mean1 = np.where(valid, (mu_total - mu) / np.where(w1 == 0, 1, w1), 0.0)
    sigma_b[valid] = (w0 * w1)[valid] * (mean0 - mean1)[valid] ** 2
    return int(np.argmax(sigma_b))


DETECTOR_KINDS = {
    "oracle": OracleCellDetector,
    "heuristic": HeuristicCellDetector,
    "external": ExternalCellDetector,
}
