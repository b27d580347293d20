"""End-to-end screening: detect cells, classify RBC crops, quantify.

One screen() call takes a slide of any size through resize -> detection
-> per-RBC crop/classify -> relabel -> counting -> overlay rendering.
Crops are taken from the original-resolution slide (not the 320x320
detector input) to preserve detail for classification.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator

from .classify import ClassifierBackend, CellVerdict
from .codecs import encode_png
from .detect import CellClass, Detection, DetectorBackend, postprocess
from .errors import EmptySlide
from .imaging import RasterImage, crop, resize
from .overlay import OverlayStyle, render_overlay
from .validation import check_open_unit, check_unit

DETECTOR_INPUT = (320, 320)
CLASSIFIER_INPUT = (224, 224)
TINY_CROP_SIDE = 4  # boxes narrower than this are flagged low-confidence


class FinalLabel(enum.Enum):
    RBC = "RBC"
    WBC = "WBC"
    Platelet = "Platelet"
    Malaria = "Malaria"


@dataclass(frozen=True)
class LabeledCell:
    final_label: FinalLabel
    det: Detection
    verdict: CellVerdict | None = None   # present iff det is an RBC
    crop_ref: str | None = None
    low_confidence_crop: bool = False

    def __post_init__(self):
        if (self.verdict is not None) != (self.det.cell_class == CellClass.RBC):
            raise ValueError("verdict must be present exactly for RBC detections")
        if self.final_label == FinalLabel.Malaria and self.det.cell_class != CellClass.RBC:
            raise ValueError("only RBC detections can be relabeled Malaria")

    def to_json_dict(self) -> dict:
        doc = {
            "final_label": self.final_label.value,
            "detected_class": self.det.cell_class.name,
            "score": self.det.score,
            "box": self.det.box.as_list(),
            "crop_ref": self.crop_ref,
            "low_confidence_crop": self.low_confidence_crop,
        }
        doc["p_infected"] = self.verdict.p_infected if self.verdict else None
        return doc


@dataclass(frozen=True)
class ScreeningResult:
    cells: tuple
    infected_count: int
    uninfected_count: int
    parasitemia_pct: float
    wbc_count: int
    platelet_count: int
    overlay_ref: str
    attachments: dict = field(default_factory=dict, compare=False)  # ref -> PNG bytes

    def to_json_dict(self) -> dict:
        return {
            "cells": [c.to_json_dict() for c in self.cells],
            "infected_count": self.infected_count,
            "uninfected_count": self.uninfected_count,
            "parasitemia_pct": self.parasitemia_pct,
            "wbc_count": self.wbc_count,
            "platelet_count": self.platelet_count,
            "overlay_ref": self.overlay_ref,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_json_dict())


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def content_hash(png_bytes: bytes) -> str:
    return hashlib.sha256(png_bytes).hexdigest()


def quantify(cells) -> tuple[int, int, float]:
    """(infected, uninfected, parasitemia %) over one slide's cells.

    Parasitemia counts parasitized RBCs among detected RBCs; zero RBCs
    yield 0.0. Stored at full precision; rounding is display-only.
    """
    infected = sum(1 for c in cells if c.final_label == FinalLabel.Malaria)
    uninfected = sum(
        1 for c in cells
        if c.det.cell_class == CellClass.RBC and c.final_label == FinalLabel.RBC
    )
    total = infected + uninfected
    pct = 100.0 * infected / total if total else 0.0
    return infected, uninfected, pct


class MalariaScreener(BaseEstimator):
    """Screening pipeline as a composable estimator.

    Parameters mirror the runtime knobs: detector / classifier backends,
    the strict > malaria_threshold relabel rule (a cell at exactly the
    threshold keeps its RBC label), detector score floor and NMS IoU.
    """

    def __init__(self, detector: DetectorBackend = None,
                 classifier: ClassifierBackend = None,
                 malaria_threshold: float = 0.80,
                 score_floor: float = 0.25,
                 nms_iou: float = 0.45,
                 overlay_style: OverlayStyle | None = None):
        self.detector = detector
        self.classifier = classifier
        self.malaria_threshold = malaria_threshold
        self.score_floor = score_floor
        self.nms_iou = nms_iou
        self.overlay_style = overlay_style

    def fit(self, X=None, y=None):
        return self

    def predict(self, slide: RasterImage, key=None) -> "ScreeningResult":
        return self.screen(slide, key)

    def screen(self, slide: RasterImage, key=None) -> ScreeningResult:
        if slide is None:
            raise EmptySlide("no slide image to screen")
        if self.detector is None or self.classifier is None:
            raise ValueError("screener needs both detector and classifier backends")
        check_open_unit(self.malaria_threshold, "malaria_threshold")
        check_unit(self.score_floor, "score_floor")

        img320 = resize(slide, *DETECTOR_INPUT)
        raw = self.detector.detect(img320, key=key)
        detections = postprocess(
            raw, self.score_floor, self.nms_iou, slide.width, slide.height
        )

        attachments: dict[str, bytes] = {}
        cells = []
        for det in detections:
            if det.cell_class == CellClass.RBC:
                crop224 = resize(crop(slide, det.box), *CLASSIFIER_INPUT)
                verdict = self.classifier.classify(crop224, key=det.box)
                label = (
                    FinalLabel.Malaria
                    if verdict.p_infected > self.malaria_threshold
                    else FinalLabel.RBC
                )
                png = encode_png(crop224)
                ref = content_hash(png)
                attachments[ref] = png
                tiny = det.box.width < TINY_CROP_SIDE or det.box.height < TINY_CROP_SIDE
                cells.append(LabeledCell(label, det, verdict, ref, tiny))
            else:
                label = FinalLabel(det.cell_class.name)
                cells.append(LabeledCell(label, det))

        infected, uninfected, pct = quantify(cells)
        wbc = sum(1 for c in cells if c.det.cell_class == CellClass.WBC)
        platelet = sum(1 for c in cells if c.det.cell_class == CellClass.Platelet)

        overlay_img = render_overlay(
            slide,
            [(c.det.box, c.final_label.value, c.det.score) for c in cells],
            self.overlay_style,
        )
        overlay_png = encode_png(overlay_img)
        overlay_ref = content_hash(overlay_png)
        attachments[overlay_ref] = overlay_png

        return ScreeningResult(
            cells=tuple(cells),
            infected_count=infected,
            uninfected_count=uninfected,
            parasitemia_pct=pct,
            wbc_count=wbc,
            platelet_count=platelet,
            overlay_ref=overlay_ref,
            attachments=attachments,
        )
