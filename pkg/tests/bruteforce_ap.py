"""Independent brute-force detection-metric evaluator.

Deliberately shares no code with the package: IoU, matching, PR
construction, and interpolation are re-derived from the metric
definitions, and the PR curve is built by exhaustively re-matching
every score-prefix from scratch instead of cumulating flags. Slow on
purpose; used to certify the real evaluator on micro-datasets.
"""

from __future__ import annotations

IOU_THRESHOLDS = [0.5 + 0.05 * i for i in range(10)]


def bf_iou(box_a, box_b) -> float:
    at, al, ab, ar = box_a
    bt, bl, bb, br = box_b
    inter_t, inter_l = max(at, bt), max(al, bl)
    inter_b, inter_r = min(ab, bb), min(ar, br)
    if inter_b <= inter_t or inter_r <= inter_l:
        return 0.0
    inter = (inter_b - inter_t) * (inter_r - inter_l)
    union = (ab - at) * (ar - al) + (bb - bt) * (br - bl) - inter
    return inter / union


def bf_match_count(preds, gts, thresh) -> int:
    """Number of TPs when greedily matching preds (score desc, stable)."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][0], i))
    taken = [False] * len(gts)
    tp = 0
    for i in order:
        best_j, best = -1, 0.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = bf_iou(preds[i][1], gt)
            if v >= thresh and v > best:
                best_j, best = j, v
        if best_j >= 0:
            taken[best_j] = True
            tp += 1
    return tp


def bf_class_ap(preds_by_image, gts_by_image, class_code, thresh, image_keys):
    per_image_preds = {
        k: [(s, b, idx) for idx, (c, s, b) in enumerate(preds_by_image.get(k, []))
            if c == class_code]
        for k in image_keys
    }
    per_image_gts = {
        k: [b for c, b in gts_by_image[k] if c == class_code] for k in image_keys
    }
    n_gt = sum(len(v) for v in per_image_gts.values())
    if n_gt == 0:
        return None

    # Global ranking: score desc, then image order, then input order.
    ranked = []
    for ki, k in enumerate(image_keys):
        for s, b, idx in per_image_preds[k]:
            ranked.append((s, ki, idx, k, b))
    ranked.sort(key=lambda e: (-e[0], e[1], e[2]))

    points = []
    for prefix_len in range(1, len(ranked) + 1):
        prefix = ranked[:prefix_len]
        tp = 0
        for k in image_keys:
            subset = [(s, b) for s, ki, idx, kk, b in prefix if kk == k]
            tp += bf_match_count(subset, per_image_gts[k], thresh)
        fp = prefix_len - tp
        points.append((tp / n_gt, tp / (tp + fp)))

    total = 0.0
    for i in range(101):
        r = i / 100.0
        best = 0.0
        for rec, prec in points:
            if rec >= r and prec > best:
                best = prec
        total += best
    return total / 101.0


def _area(box) -> float:
    t, l, b, r = box
    return float((b - t) * (r - l))


def _bucket_keep(area: float, bucket: str) -> bool:
    if bucket == "small":
        return area < 32.0 ** 2
    if bucket == "medium":
        return 32.0 ** 2 <= area <= 96.0 ** 2
    if bucket == "large":
        return area > 96.0 ** 2
    return True


def _cap(preds, max_dets):
    by_class = {}
    for idx, (c, s, b) in enumerate(preds):
        by_class.setdefault(c, []).append((idx, c, s, b))
    keep_idx = set()
    for entries in by_class.values():
        ranked = sorted(entries, key=lambda e: (-e[2], e[0]))
        keep_idx.update(e[0] for e in ranked[:max_dets])
    return [e for idx, e in enumerate(preds) if idx in keep_idx]


def bf_bucket_ap(preds_by_image, gts_by_image, bucket, thresholds, max_dets=100):
    image_keys = sorted(gts_by_image)
    preds = {
        k: [(c, s, b) for c, s, b in _cap(list(preds_by_image.get(k, [])), max_dets)
            if _bucket_keep(_area(b), bucket)]
        for k in image_keys
    }
    gts = {
        k: [(c, b) for c, b in gts_by_image[k] if _bucket_keep(_area(b), bucket)]
        for k in image_keys
    }
    class_codes = sorted({c for v in gts.values() for c, _ in v})
    per_class = []
    for code in class_codes:
        values = [bf_class_ap(preds, gts, code, t, image_keys) for t in thresholds]
        per_class.append(sum(values) / len(values))
    if not per_class:
        return None
    return sum(per_class) / len(per_class)


def bf_suite(preds_by_image, gts_by_image, max_dets=100) -> dict:
    return {
        "ap": bf_bucket_ap(preds_by_image, gts_by_image, "all", IOU_THRESHOLDS, max_dets),
        "ap50": bf_bucket_ap(preds_by_image, gts_by_image, "all", [0.5], max_dets),
        "ap75": bf_bucket_ap(preds_by_image, gts_by_image, "all", [0.75], max_dets),
        "ap_small": bf_bucket_ap(preds_by_image, gts_by_image, "small", IOU_THRESHOLDS, max_dets),
        "ap_medium": bf_bucket_ap(preds_by_image, gts_by_image, "medium", IOU_THRESHOLDS, max_dets),
        "ap_large": bf_bucket_ap(preds_by_image, gts_by_image, "large", IOU_THRESHOLDS, max_dets),
    }


def random_micro_dataset(rnd, max_images=5, max_boxes=10):
    """Random (preds, gts) pair with distinct scores and mixed box sizes."""
    n_images = rnd.randint(1, max_images)
    score_pool = [v / 10000.0 for v in rnd.sample(range(1, 10000), max_images * max_boxes)]
    preds, gts = {}, {}
    cursor = 0
    for i in range(n_images):
        key = f"img{i}"
        gt_list = []
        for _ in range(rnd.randint(0, 4)):
            gt_list.append((rnd.randint(0, 2), _random_box(rnd)))
        pred_list = []
        for _ in range(rnd.randint(0, max_boxes)):
            score = score_pool[cursor]
            cursor += 1
            if gt_list and rnd.random() < 0.7:
                cls, box = gt_list[rnd.randrange(len(gt_list))]
                box = _jitter_box(rnd, box)
                if rnd.random() < 0.15:
                    cls = rnd.randint(0, 2)
            else:
                cls, box = rnd.randint(0, 2), _random_box(rnd)
            pred_list.append((cls, score, box))
        preds[key] = pred_list
        gts[key] = gt_list
    return preds, gts


def _random_box(rnd):
    size_class = rnd.random()
    if size_class < 0.4:
        w, h = rnd.randint(4, 28), rnd.randint(4, 28)
    elif size_class < 0.8:
        w, h = rnd.randint(36, 90), rnd.randint(36, 90)
    else:
        w, h = rnd.randint(98, 150), rnd.randint(98, 150)
    t = rnd.randint(0, 160)
    l = rnd.randint(0, 160)
    return (t, l, t + h, l + w)


def _jitter_box(rnd, box):
    t, l, b, r = box
    dt = rnd.randint(-4, 4)
    dl = rnd.randint(-4, 4)
    db = rnd.randint(-4, 4)
    dr = rnd.randint(-4, 4)
    nt, nl, nb, nr = t + dt, l + dl, b + db, r + dr
    if nb <= nt:
        nb = nt + 1
    if nr <= nl:
        nr = nl + 1
    return (nt, nl, nb, nr)
