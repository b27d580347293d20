"""Per-cell malaria parasite classification stage.

Backends take a 224x224 RGB crop and return a two-class probability
distribution (infected / uninfected). Oracle, heuristic-stain, and
external subprocess backends mirror the detector stage.
"""

from __future__ import annotations

import math
import os
import subprocess
import tempfile
from dataclasses import dataclass

from sklearn.base import BaseEstimator

from .detect import iou
from .errors import BackendUnavailable
from .imaging import RasterImage, rgb_to_hsv_array
from .validation import check_image

INPUT_SIZE = (224, 224)


@dataclass(frozen=True)
class CellVerdict:
    """Normalized two-class distribution over infected / uninfected."""

    p_infected: float
    p_uninfected: float

    def __post_init__(self):
        if not (0.0 <= self.p_infected <= 1.0 and 0.0 <= self.p_uninfected <= 1.0):
            raise ValueError("probabilities must be in [0, 1]")
        if abs(self.p_infected + self.p_uninfected - 1.0) > 1e-6:
            raise ValueError("verdict must sum to 1")

    @classmethod
    def infected(cls, p: float) -> "CellVerdict":
        return cls(p, 1.0 - p)


@dataclass(frozen=True)
class ClassifierBackendDescriptor:
    name: str
    input_size: tuple[int, int]
    kind: str


class ClassifierBackend(BaseEstimator):
    """Stateless estimator surface shared by all classifier backends."""

    name = "classifier"
    kind = "abstract"
    reentrant = True

    def fit(self, X=None, y=None):
        return self

    def describe(self) -> ClassifierBackendDescriptor:
        return ClassifierBackendDescriptor(self.name, INPUT_SIZE, self.kind)

    def classify(self, crop: RasterImage, key=None) -> CellVerdict:
        check_image(crop, INPUT_SIZE)
        return self._classify(crop, key)

    def _classify(self, crop: RasterImage, key) -> CellVerdict:
        raise NotImplementedError


class OracleParasiteClassifier(ClassifierBackend):
    """Replays known infection labels.

    Either a constant verdict, or per-cell labels joined on the
    detection's pixel box (``key``) by maximum IoU against the fixture
    boxes; the oracle-detector path reproduces fixture boxes exactly, so
    the join is exact there.
    """

    name = "oracle"
    kind = "oracle"

    def __init__(self, labeled_boxes=None, constant=None, min_match_iou=0.1):
        self.labeled_boxes = labeled_boxes  # list of (PixelBox, infected: bool)
        self.constant = constant
        self.min_match_iou = min_match_iou

    def _classify(self, crop, key):
        if self.constant is not None:
            return CellVerdict.infected(1.0 if self.constant else 0.0)
        if not self.labeled_boxes:
            raise BackendUnavailable("oracle classifier has no labels configured")
        if key is None:
            raise BackendUnavailable("oracle classifier needs the detection box as key")
        best, best_iou = None, 0.0
        for box, infected in self.labeled_boxes:
            overlap = iou(box, key)
            if overlap > best_iou:
                best, best_iou = infected, overlap
        if best is None or best_iou < self.min_match_iou:
            raise BackendUnavailable(f"no fixture label overlaps box {key}")
        return CellVerdict.infected(1.0 if best else 0.0)


class HeuristicParasiteClassifier(ClassifierBackend):
    """Stain-fraction stand-in for the neural classifier.

    f is the fraction of dark-purple chromatin pixels (hue in
    [hue_lo, hue_hi], saturation >= sat_min, value <= value_max);
    p_infected = logistic((f - tau) / scale). Monotone in f and invariant
    to pixel positions. Calibrated against the synthetic generator;
    not clinically meaningful.
    """

    name = "heuristic"
    kind = "heuristic"

    def __init__(self, hue_lo=250.0, hue_hi=330.0, sat_min=0.3, value_max=0.75,
                 tau=0.01, scale=0.004):
        self.hue_lo = hue_lo
        self.hue_hi = hue_hi
        self.sat_min = sat_min
        self.value_max = value_max
        self.tau = tau
        self.scale = scale

    def stain_fraction(self, crop: RasterImage) -> float:
        hue, sat, val = rgb_to_hsv_array(crop.pixels)
        qualifying = (
            (hue >= self.hue_lo) & (hue <= self.hue_hi)
            & (sat >= self.sat_min) & (val <= self.value_max)
        )
        return float(qualifying.mean())

    def _classify(self, crop, key):
        f = self.stain_fraction(crop)
        p = 1.0 / (1.0 + math.exp(-(f - self.tau) / self.scale))
        return CellVerdict.infected(p)


class ExternalParasiteClassifier(ClassifierBackend):
    """Subprocess adapter; same protocol shape as the external detector.

    The command receives the path to a 224x224 PPM and prints one line,
    ``p_infected p_uninfected``. The subprocess owns any model-specific
    input normalization (pixel scaling, mean subtraction) and should
    document it per model file; this adapter hands over raw 8-bit RGB.
    """

    name = "external"
    kind = "external"
    reentrant = False

    def __init__(self, command=None, timeout=30.0):
        self.command = command
        self.timeout = timeout

    def _classify(self, crop, key):
        from .codecs import encode_ppm

        if not self.command:
            raise BackendUnavailable("external classifier has no command configured")
        argv = list(self.command) if isinstance(self.command, (list, tuple)) \
            else self.command.split()
        fd, path = tempfile.mkstemp(suffix=".ppm")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(encode_ppm(crop))
            proc = subprocess.run(
                argv + [path], capture_output=True, text=True, timeout=self.timeout
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendUnavailable(f"external classifier failed: {exc}") from exc
        finally:
            if os.path.exists(path):
                os.unlink(path)
        if proc.returncode != 0:
            raise BackendUnavailable(
                f"external classifier exited {proc.returncode}: {proc.stderr.strip()}"
            )
        parts = proc.stdout.split()
        if len(parts) != 2:
            raise BackendUnavailable(f"bad classifier protocol output: {proc.stdout!r}")
        try:
            p_inf, p_uninf = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise BackendUnavailable(
                f"bad classifier protocol output {proc.stdout!r}: {exc}"
            ) from exc
        total = p_inf + p_uninf
        if total <= 0:
            raise BackendUnavailable("classifier returned a zero distribution")
        return CellVerdict(p_inf / total, p_uninf / total)


CLASSIFIER_KINDS = {
    "oracle": OracleParasiteClassifier,
    "heuristic": HeuristicParasiteClassifier,
    "external": ExternalParasiteClassifier,
}
