"""Box geometry, raw-map decoding and class-wise greedy NMS."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import _sigmoid

EXP_CLAMP = 8.0


@dataclass(frozen=True)
class DetectionBox:
    cls: int
    conf: float
    cx: float
    cy: float
    w: float
    h: float
    image_id: int = 0

    def corners(self) -> np.ndarray:
        return cxcywh_to_xyxy(np.array([self.cx, self.cy, self.w, self.h]))


def cxcywh_to_xyxy(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    half = b[..., 2:4] / 2
    return np.concatenate([b[..., 0:2] - half, b[..., 0:2] + half], axis=-1)


def xyxy_to_cxcywh(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    return np.concatenate([(b[..., 0:2] + b[..., 2:4]) / 2, b[..., 2:4] - b[..., 0:2]], axis=-1)


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of corner-form boxes [A,4] x [B,4] -> [A,B]."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    inter = np.clip(rb - lt, 0, None).prod(-1)
    area_a = np.clip(a[:, 2:] - a[:, :2], 0, None).prod(-1)
    area_b = np.clip(b[:, 2:] - b[:, :2], 0, None).prod(-1)
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> np.ndarray:
    """Greedy suppression by descending score; returns kept indices in that order."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    keep = []
    suppressed = np.zeros(len(order), dtype=bool)
    ious = box_iou(boxes, boxes)
    for pos, i in enumerate(order):
        if suppressed[pos]:
            continue
        keep.append(int(i))
        suppressed[pos + 1:] |= ious[i, order[pos + 1:]] > iou_threshold
    return np.array(keep, dtype=np.int64)


def classwise_nms(boxes: np.ndarray, scores: np.ndarray, classes: np.ndarray,
                  iou_threshold: float) -> np.ndarray:
    """Independent greedy suppression per class; returns sorted kept indices."""
    classes = np.asarray(classes)
    keep = []
    for k in np.unique(classes):
        idx = np.nonzero(classes == k)[0]
        keep.extend(idx[nms(np.asarray(boxes)[idx], np.asarray(scores)[idx], iou_threshold)])
    return np.sort(np.array(keep, dtype=np.int64))


def decode_layer(cls_logits: np.ndarray, box_raw: np.ndarray, stride: int,
                 image_size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """One image's maps [K,h,w] / [4,h,w] -> (scores [h*w, K], cxcywh boxes [h*w, 4]) normalized."""
    _, h, w = cls_logits.shape
    ih, iw = image_size
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    cx = (jj + _sigmoid(box_raw[0])) * stride / iw
    cy = (ii + _sigmoid(box_raw[1])) * stride / ih
    bw = np.exp(np.clip(box_raw[2], -EXP_CLAMP, EXP_CLAMP)) * stride / iw
    bh = np.exp(np.clip(box_raw[3], -EXP_CLAMP, EXP_CLAMP)) * stride / ih
    boxes = np.stack([cx, cy, bw, bh], axis=-1).reshape(-1, 4)
    scores = _sigmoid(cls_logits).reshape(cls_logits.shape[0], -1).T
    return scores, boxes


def decode_and_nms(raw: dict, image_size: tuple[int, int], conf_threshold: float = 0.05,
                   iou_threshold: float = 0.5, max_det: int = 100, image_index: int = 0,
                   image_id: int = 0) -> list[DetectionBox]:
    """``raw`` maps detect level -> (cls logits [N,K,h,w], box offsets [N,4,h,w]), arrays or tensors."""
    if not (0 < conf_threshold < 1 and 0 < iou_threshold < 1):
        raise ConfigError("thresholds must lie in (0, 1)")
    all_scores, all_boxes = [], []
    for level in sorted(raw):
        c, b = (getattr(t, "data", t) for t in raw[level])
        s, bx = decode_layer(np.asarray(c)[image_index], np.asarray(b)[image_index], 2 ** level, image_size)
        all_scores.append(s)
        all_boxes.append(bx)
    scores = np.concatenate(all_scores)
    boxes = np.concatenate(all_boxes)
    cell, cls = np.nonzero(scores >= conf_threshold)
    conf = scores[cell, cls]
    corners = np.clip(cxcywh_to_xyxy(boxes[cell]), 0.0, 1.0)
    out: list[DetectionBox] = []
    for i in classwise_nms(corners, conf, cls, iou_threshold):
        x0, y0, x1, y1 = corners[i]
        out.append(DetectionBox(int(cls[i]), float(conf[i]), (x0 + x1) / 2, (y0 + y1) / 2,
                                x1 - x0, y1 - y0, image_id))
    out.sort(key=lambda d: -d.conf)
    return out[:max_det]
