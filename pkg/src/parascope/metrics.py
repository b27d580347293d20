"""Detection and classification evaluation.

Detection follows the COCO protocol: greedy score-ordered matching per
image and class, 101-point interpolated average precision, AP averaged
over IoU thresholds 0.50:0.05:0.95, and small/medium/large area buckets
at 32^2 / 96^2 pixel boundaries. Classes (or buckets) without ground
truth are excluded from means rather than scored zero.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from pathlib import Path

from .detect import CellClass, iou
from .errors import EmptySet, KeyMismatch, LengthMismatch, NoGroundTruth
from .imaging import PixelBox

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = tuple(i / 100.0 for i in range(101))
AREA_BUCKETS = {
    "all": (0.0, float("inf")),
    "small": (0.0, 32.0 ** 2),
    "medium": (32.0 ** 2, 96.0 ** 2),
    "large": (96.0 ** 2, float("inf")),
}

# A prediction is (class_code, score, box); ground truth is (class_code, box).
# Boxes are PixelBox or (top, left, bottom, right) sequences.


def _box_area(box) -> float:
    t, l, b, r = box.as_list() if isinstance(box, PixelBox) else box
    return float((b - t) * (r - l))


def _in_bucket(area: float, bucket: str) -> bool:
    lo, hi = AREA_BUCKETS[bucket]
    if bucket == "small":
        return area < hi
    if bucket == "medium":
        return lo <= area <= hi
    if bucket == "large":
        return area > lo
    return True


def match_detections(preds, gts, iou_thresh: float):
    """Greedy matching for one image and one class.

    ``preds`` are (score, box) in input order; ``gts`` are boxes. Each
    prediction, in descending score order (ties keep input order), takes
    the unmatched ground truth with the highest IoU at or above the
    threshold. Returns (per-pred TP flags, per-GT matched flags).
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][0], i))
    gt_matched = [False] * len(gts)
    pred_tp = [False] * len(preds)
    for i in order:
        best_j, best_iou = -1, 0.0
        for j, gt_box in enumerate(gts):
            if gt_matched[j]:
                continue
            overlap = iou(preds[i][1], gt_box)
            if overlap >= iou_thresh and overlap > best_iou:
                best_j, best_iou = j, overlap
        if best_j >= 0:
            gt_matched[best_j] = True
            pred_tp[i] = True
    return pred_tp, gt_matched


def average_precision(scored_flags, n_gt: int) -> float:
    """101-point interpolated AP from (score, is_tp) pairs.

    Pairs are sorted by score descending (stable); interpolated precision
    at recall r is the maximum precision attained at any recall >= r.
    Recall is non-decreasing along the curve, so that maximum is a
    suffix-max located by bisection.
    """
    if n_gt <= 0:
        raise NoGroundTruth("AP undefined with zero ground-truth instances")
    ordered = sorted(range(len(scored_flags)), key=lambda i: (-scored_flags[i][0], i))
    recalls, precisions = [], []
    tp = fp = 0
    for i in ordered:
        if scored_flags[i][1]:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))

    suffix_max = [0.0] * len(precisions)
    running = 0.0
    for i in range(len(precisions) - 1, -1, -1):
        running = max(running, precisions[i])
        suffix_max[i] = running

    total = 0.0
    for r in RECALL_POINTS:
        idx = bisect.bisect_left(recalls, r - 1e-12)
        if idx < len(suffix_max):
            total += suffix_max[idx]
    return total / len(RECALL_POINTS)


@dataclass(frozen=True)
class DetectionMetrics:
    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None

    def to_report(self, area_frame: str = "original") -> dict:
        raw = {
            "AP": self.ap, "AP50": self.ap50, "AP75": self.ap75,
            "AP_S": self.ap_small, "AP_M": self.ap_medium, "AP_L": self.ap_large,
        }
        display = {
            k: (None if v is None else round(100.0 * v, 1)) for k, v in raw.items()
        }
        return {"raw": raw, "display": display, "area_frame": area_frame}


def _filter_bucket(preds, gts, bucket: str):
    fp = [(c, s, b) for c, s, b in preds if _in_bucket(_box_area(b), bucket)]
    fg = [(c, b) for c, b in gts if _in_bucket(_box_area(b), bucket)]
    return fp, fg


def _class_ap(preds_by_image, gts_by_image, class_code: int, iou_thresh: float,
              image_keys) -> float:
    scored_flags = []
    n_gt = 0
    for key in image_keys:
        preds = [(s, b) for c, s, b in preds_by_image.get(key, []) if c == class_code]
        gts = [b for c, b in gts_by_image[key] if c == class_code]
        n_gt += len(gts)
        flags, _ = match_detections(preds, gts, iou_thresh)
        scored_flags.extend((preds[i][0], flags[i]) for i in range(len(preds)))
    if n_gt == 0:
        raise NoGroundTruth(f"class {class_code} absent from ground truth")
    return average_precision(scored_flags, n_gt)


def _bucket_mean_ap(preds_by_image, gts_by_image, bucket: str, thresholds,
                    image_keys) -> float | None:
    filtered_p = {k: _filter_bucket(preds_by_image.get(k, []), [], bucket)[0]
                  for k in image_keys}
    filtered_g = {k: _filter_bucket([], gts_by_image[k], bucket)[1]
                  for k in image_keys}
    class_codes = sorted({c for gts in filtered_g.values() for c, _ in gts})
    per_class = []
    for code in class_codes:
        aps = []
        for thresh in thresholds:
            aps.append(_class_ap(filtered_p, filtered_g, code, thresh, image_keys))
        per_class.append(sum(aps) / len(aps))
    if not per_class:
        return None
    return sum(per_class) / len(per_class)


def _cap_max_dets(preds, max_dets: int):
    """Keep the top max_dets per class by score (ties keep input order)."""
    by_class: dict[int, list] = {}
    for entry in preds:
        by_class.setdefault(entry[0], []).append(entry)
    out = []
    for entries in by_class.values():
        ranked = sorted(range(len(entries)), key=lambda i: (-entries[i][1], i))
        keep = set(ranked[:max_dets])
        out.extend(e for i, e in enumerate(entries) if i in keep)
    return out


def coco_ap_suite(preds_by_image: dict, gts_by_image: dict,
                  max_dets: int = 100) -> DetectionMetrics:
    """The six-column detection metric family over a keyed dataset.

    ``preds_by_image`` maps image key -> [(class, score, box)];
    ``gts_by_image`` maps image key -> [(class, box)]. Every prediction
    key must exist in the ground truth.
    """
    unknown = set(preds_by_image) - set(gts_by_image)
    if unknown:
        raise KeyMismatch(f"predictions for unknown images: {sorted(unknown)}")
    image_keys = sorted(gts_by_image)
    preds = {k: _cap_max_dets(list(preds_by_image.get(k, [])), max_dets)
             for k in image_keys}
    gts = {k: list(gts_by_image[k]) for k in image_keys}

    return DetectionMetrics(
        ap=_bucket_mean_ap(preds, gts, "all", IOU_THRESHOLDS, image_keys),
        ap50=_bucket_mean_ap(preds, gts, "all", (0.5,), image_keys),
        ap75=_bucket_mean_ap(preds, gts, "all", (0.75,), image_keys),
        ap_small=_bucket_mean_ap(preds, gts, "small", IOU_THRESHOLDS, image_keys),
        ap_medium=_bucket_mean_ap(preds, gts, "medium", IOU_THRESHOLDS, image_keys),
        ap_large=_bucket_mean_ap(preds, gts, "large", IOU_THRESHOLDS, image_keys),
    )


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    true_infected: int      # infected predicted infected
    false_infected: int     # uninfected predicted infected
    false_uninfected: int   # infected predicted uninfected
    true_uninfected: int    # uninfected predicted uninfected

    @property
    def confusion(self) -> dict:
        return {
            "TP": self.true_infected, "FP": self.false_infected,
            "FN": self.false_uninfected, "TN": self.true_uninfected,
        }

    def to_report(self) -> dict:
        return {"accuracy": self.accuracy, "confusion": self.confusion}


def classification_report(p_infected_values, infected_labels,
                          decision_threshold: float = 0.5) -> ClassificationMetrics:
    """Accuracy and 2x2 confusion; predict infected iff p > threshold."""
    if len(p_infected_values) != len(infected_labels):
        raise LengthMismatch(
            f"{len(p_infected_values)} verdicts vs {len(infected_labels)} labels"
        )
    if not p_infected_values:
        raise EmptySet("classification metrics need at least one sample")
    tp = fp = fn = tn = 0
    for p, infected in zip(p_infected_values, infected_labels):
        predicted = p > decision_threshold
        if infected and predicted:
            tp += 1
        elif infected:
            fn += 1
        elif predicted:
            fp += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    return ClassificationMetrics((tp + tn) / total, tp, fp, fn, tn)


# --- prediction dump files (JSON lines, one object per image) ---

def write_prediction_dump(path, preds_by_image: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(preds_by_image):
            detections = [
                {"class": int(c), "score": float(s),
                 "box": b.as_list() if isinstance(b, PixelBox) else list(b)}
                for c, s, b in preds_by_image[key]
            ]
            fh.write(json.dumps({"image": key, "detections": detections},
                                sort_keys=True) + "\n")


def read_prediction_dump(path) -> dict:
    preds = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        doc = json.loads(line)
        entries = []
        for det in doc["detections"]:
            t, l, b, r = det["box"]
            entries.append((int(det["class"]), float(det["score"]), (t, l, b, r)))
        preds[str(doc["image"])] = entries
    return preds


def annotations_to_gts(annotations: dict) -> dict:
    """AnnotatedImage mapping -> the (class, box) mapping the suite eats."""
    return {
        key: [(int(cls), box) for cls, box in ann.objects]
        for key, ann in annotations.items()
    }


def verdict_is_infected(label: str) -> bool:
    return label == "Parasitized"


CLASS_NAMES = {int(c): c.name for c in CellClass}
