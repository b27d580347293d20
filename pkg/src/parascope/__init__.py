"""Offline-first blood-smear screening toolkit.

Two-stage recognition (cell detection, per-RBC malaria classification),
parasitemia quantification, COCO-style evaluation, local content-
addressed persistence with opportunistic cloud sync, and the device
service + CLI that operate it.
"""

__version__ = "0.1.0"

from .classify import (
    CellVerdict,
    ClassifierBackend,
    ExternalParasiteClassifier,
    HeuristicParasiteClassifier,
    OracleParasiteClassifier,
)
from .detect import (
    CellClass,
    Detection,
    DetectorBackend,
    ExternalCellDetector,
    HeuristicCellDetector,
    OracleCellDetector,
    RawDetection,
    iou,
    postprocess,
)
from .imaging import PixelBox, RasterImage, crop, resize, rgb_to_hsv
from .metrics import (
    ClassificationMetrics,
    DetectionMetrics,
    classification_report,
    coco_ap_suite,
)
from .overlay import OverlayStyle, render_overlay
from .pipeline import (
    FinalLabel,
    LabeledCell,
    MalariaScreener,
    ScreeningResult,
    quantify,
)
from .store import BlobStore, SlideRecord
from .sync import SyncClient, SyncReport, sync_once
from .synthetic import SyntheticSlideSpec, generate_synthetic_slide

__all__ = [
    "BlobStore",
    "CellClass",
    "CellVerdict",
    "ClassificationMetrics",
    "ClassifierBackend",
    "Detection",
    "DetectionMetrics",
    "DetectorBackend",
    "ExternalCellDetector",
    "ExternalParasiteClassifier",
    "FinalLabel",
    "HeuristicCellDetector",
    "HeuristicParasiteClassifier",
    "LabeledCell",
    "MalariaScreener",
    "OracleCellDetector",
    "OracleParasiteClassifier",
    "OverlayStyle",
    "PixelBox",
    "RasterImage",
    "RawDetection",
    "ScreeningResult",
    "SlideRecord",
    "SyncClient",
    "SyncReport",
    "SyntheticSlideSpec",
    "classification_report",
    "coco_ap_suite",
    "crop",
    "generate_synthetic_slide",
    "iou",
    "postprocess",
    "quantify",
    "render_overlay",
    "resize",
    "rgb_to_hsv",
    "sync_once",
]
