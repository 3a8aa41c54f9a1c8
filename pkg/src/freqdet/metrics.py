"""COCO-style average precision with 101-point interpolation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import DetectionBox, box_iou, cxcywh_to_xyxy
from .errors import DataError

COCO_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
SMALL_AREA = 32.0 ** 2


@dataclass(frozen=True)
class APResult:
    ap: float
    ap50: float
    ap75: float
    ap_s: float

    def as_dict(self) -> dict[str, float]:
        return {"AP": self.ap, "AP50": self.ap50, "AP75": self.ap75, "AP_S": self.ap_s}


def interpolated_ap(tp: np.ndarray, n_gt: int) -> float:
    """``tp`` flags in descending-score order (ignored detections already removed)."""
    if n_gt == 0:
        return float("nan")
    if len(tp) == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    # precision envelope: best precision at any recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS - 1e-12, side="left")
    vals = np.where(idx < len(env), env[np.minimum(idx, len(env) - 1)], 0.0)
    return float(vals.mean())


def match_class(dets: list[tuple[int, float, np.ndarray, float]], gts: dict[int, np.ndarray],
                gt_ignore: dict[int, np.ndarray], thr: float, area_range=None) -> tuple[np.ndarray, int]:
    """Greedy matching of one class at one IoU threshold.

    ``dets`` rows are (image, score, corners, area). Returns the tp flags of
    counted detections and the number of non-ignored ground truths.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i][1])
    used = {img: np.zeros(len(g), dtype=bool) for img, g in gts.items()}
    flags = []
    for i in order:
        img, _, box, area = dets[i]
        g = gts.get(img)
        best_j, ignored = -1, False
        if g is not None and len(g):
            ious = box_iou(box[None], g)[0]
            ign = gt_ignore[img]
            # prefer real ground truth; fall back to ignored ones
            for pool in (~ign, ign):
                cand = np.nonzero(pool & ~used[img] & (ious >= thr))[0]
                if len(cand):
                    best_j = int(cand[np.argmax(ious[cand])])
                    ignored = bool(ign[best_j])
                    break
        if best_j >= 0:
            used[img][best_j] = True
            if not ignored:
                flags.append(1.0)
            continue
        if area_range is not None and not (area_range[0] <= area < area_range[1]):
            continue
        flags.append(0.0)
    n_gt = int(sum((~ign).sum() for ign in gt_ignore.values()))
    return np.array(flags), n_gt


def _mean(values: list[float]) -> float:
    vals = [v for v in values if not np.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def average_precision(predictions: list[DetectionBox], annotations: dict[int, np.ndarray],
                      image_size: tuple[int, int], thr: float, area_range=None) -> float:
    """Mean over classes with at least one counted ground truth."""
    ih, iw = image_size
    scale = np.array([iw, ih, iw, ih], dtype=np.float64)
    classes = set()
    for ann in annotations.values():
        classes.update(int(c) for c in np.asarray(ann).reshape(-1, 5)[:, 0])
    per_class = []
    for k in sorted(classes):
        gts, ign = {}, {}
        for img, ann in annotations.items():
            ann = np.asarray(ann, dtype=np.float64).reshape(-1, 5)
            rows = ann[ann[:, 0] == k]
            gts[img] = cxcywh_to_xyxy(rows[:, 1:5]) * scale
            areas = rows[:, 3] * rows[:, 4] * iw * ih
            if area_range is None:
                ign[img] = np.zeros(len(rows), dtype=bool)
            else:
                ign[img] = ~((areas >= area_range[0]) & (areas < area_range[1]))
        dets = [(d.image_id, d.conf, d.corners() * scale, d.w * d.h * iw * ih)
                for d in predictions if d.cls == k]
        flags, n_gt = match_class(dets, gts, ign, thr, area_range)
        per_class.append(interpolated_ap(flags, n_gt))
    return _mean(per_class)


def evaluate_ap(predictions: list[DetectionBox], annotations: dict[int, np.ndarray],
                image_size: tuple[int, int], iou_thresholds=COCO_THRESHOLDS) -> APResult:
    """``annotations`` maps image id -> [B,5] rows (class, cx, cy, w, h), normalized."""
    unknown = sorted({d.image_id for d in predictions} - set(annotations))
    if unknown:
        raise DataError(f"predictions reference unknown image ids {unknown[:5]}")
    thrs = [float(t) for t in iou_thresholds]
    by_thr = {t: average_precision(predictions, annotations, image_size, t) for t in thrs}
    small = [average_precision(predictions, annotations, image_size, t, (0.0, SMALL_AREA)) for t in thrs]

    def pick(t):
        v = by_thr.get(t)
        if v is None:
            v = average_precision(predictions, annotations, image_size, t)
        return 0.0 if np.isnan(v) else v

    ap = _mean(list(by_thr.values()))
    return APResult(0.0 if np.isnan(ap) else ap, pick(0.5), pick(0.75), _mean(small))
