"""Target assignment, focal classification loss and GIoU box loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import EXP_CLAMP
from .tensor import Tensor, clip, exp, log_sigmoid, maximum, minimum, sigmoid


@dataclass
class Targets:
    cls: np.ndarray  # [N,K,h,w] one-hot
    index: tuple  # (n, i, j) of positive cells
    boxes: np.ndarray  # [P,4] pixel corners of the assigned ground truth


def assign_layer(size_px: float, levels: tuple[int, ...]) -> int:
    """Detect level whose cell size best matches the object (stride ~ size / 2)."""
    return min(levels, key=lambda l: (abs(np.log(max(size_px, 1e-6) / (2 * 2 ** l))), l))


def build_targets(annotations: list[np.ndarray], levels: tuple[int, ...], num_classes: int,
                  image_size: tuple[int, int]) -> dict[int, Targets]:
    """``annotations[n]`` is [B,5] rows of (class, cx, cy, w, h) in normalized units.

    Each box goes to its centre cell on a single level; if two boxes land on the
    same cell the larger one wins.
    """
    ih, iw = image_size
    n = len(annotations)
    per: dict[int, dict] = {l: {} for l in levels}
    for b, ann in enumerate(annotations):
        for row in np.asarray(ann, dtype=np.float64).reshape(-1, 5):
            k, cx, cy, w, h = row
            wp, hp = w * iw, h * ih
            l = assign_layer(max(wp, hp), levels)
            s = 2 ** l
            i = min(int(cy * ih // s), ih // s - 1)
            j = min(int(cx * iw // s), iw // s - 1)
            key = (b, i, j)
            if key in per[l] and per[l][key][1] >= wp * hp:
                continue
            corners = np.array([cx * iw - wp / 2, cy * ih - hp / 2, cx * iw + wp / 2, cy * ih + hp / 2])
            per[l][key] = (int(k), wp * hp, corners)
    out = {}
    for l in levels:
        s = 2 ** l
        cls = np.zeros((n, num_classes, ih // s, iw // s))
        keys = sorted(per[l])
        for (b, i, j) in keys:
            cls[b, per[l][(b, i, j)][0], i, j] = 1.0
        idx = tuple(np.array([k[d] for k in keys], dtype=np.int64) for d in range(3))
        boxes = np.array([per[l][k][2] for k in keys]).reshape(-1, 4)
        out[l] = Targets(cls, idx, boxes)
    return out


def focal_loss(logits: Tensor, target: np.ndarray, gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Summed sigmoid focal loss."""
    t = Tensor(target)
    p = sigmoid(logits)
    ce = -(t * log_sigmoid(logits) + (1.0 - t) * log_sigmoid(-logits))
    p_t = t * p + (1.0 - t) * (1.0 - p)
    one_minus = 1.0 - p_t
    mod = one_minus * one_minus if gamma == 2.0 else one_minus ** gamma
    a_t = Tensor(target * alpha + (1 - target) * (1 - alpha))
    return (a_t * mod * ce).sum()


def decode_pixel_boxes(raw: Tensor, index: tuple, stride: int) -> list[Tensor]:
    """Positive-cell offsets [N,4,h,w] -> pixel corner coordinates x0, y0, x1, y1 (each [P])."""
    n, i, j = index
    tx, ty, tw, th = (raw[n, np.full_like(n, c), i, j] for c in range(4))
    cx = (sigmoid(tx) + Tensor(j.astype(np.float64))) * float(stride)
    cy = (sigmoid(ty) + Tensor(i.astype(np.float64))) * float(stride)
    w = exp(clip(tw, -EXP_CLAMP, EXP_CLAMP)) * float(stride)
    h = exp(clip(th, -EXP_CLAMP, EXP_CLAMP)) * float(stride)
    return [cx - w * 0.5, cy - h * 0.5, cx + w * 0.5, cy + h * 0.5]


def giou_loss(pred: list[Tensor], target: np.ndarray) -> Tensor:
    """Summed ``1 - GIoU`` between predicted corner tensors and target corners [P,4]."""
    px0, py0, px1, py1 = pred
    tx0, ty0, tx1, ty1 = (Tensor(target[:, c]) for c in range(4))
    iw = clip(minimum(px1, tx1) - maximum(px0, tx0), 0.0, np.inf)
    ih = clip(minimum(py1, ty1) - maximum(py0, ty0), 0.0, np.inf)
    inter = iw * ih
    area_p = (px1 - px0) * (py1 - py0)
    area_t = Tensor((target[:, 2] - target[:, 0]) * (target[:, 3] - target[:, 1]))
    union = area_p + area_t - inter
    hull = (maximum(px1, tx1) - minimum(px0, tx0)) * (maximum(py1, ty1) - minimum(py0, ty0))
    giou = inter / union - (hull - union) / hull
    return (1.0 - giou).sum()


def detection_loss(raw: dict[int, tuple[Tensor, Tensor]], targets: dict[int, Targets],
                   box_weight: float = 2.0) -> tuple[Tensor, dict[str, float]]:
    npos = sum(len(t.boxes) for t in targets.values())
    norm = 1.0 / max(1, npos)
    cls_total, box_total = None, None
    for level, (cls, box) in raw.items():
        tg = targets[level]
        c = focal_loss(cls, tg.cls)
        cls_total = c if cls_total is None else cls_total + c
        if len(tg.boxes):
            b = giou_loss(decode_pixel_boxes(box, tg.index, 2 ** level), tg.boxes)
            box_total = b if box_total is None else box_total + b
    loss = cls_total * norm
    parts = {"cls": float(cls_total.data) * norm, "box": 0.0}
    if box_total is not None:
        loss = loss + box_total * (box_weight * norm)
        parts["box"] = float(box_total.data) * norm
    return loss, parts
