"""Independent reference implementations used as test oracles."""
import math

import numpy as np


def naive_conv2d(x, w, b=None, stride=1, padding=0, groups=1):
    n, cin, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    xp = np.zeros((n, cin, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    cog = cout // groups
    for bi in range(n):
        for co in range(cout):
            gi = co // cog
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[co, ci, u, v] * xp[bi, gi * cg + ci, i * stride + u, j * stride + v]
                    out[bi, co, i, j] = acc + (b[co] if b is not None else 0.0)
    return out


def direct_dft2(x):
    h, w = x.shape[-2:]
    kh = np.arange(h)
    kw = np.arange(w)
    mh = np.exp(-2j * np.pi * np.outer(kh, kh) / h)
    mw = np.exp(-2j * np.pi * np.outer(kw, kw) / w)
    out = np.zeros(x.shape, dtype=complex)
    for idx in np.ndindex(*x.shape[:-2]):
        grid = x[idx]
        acc = np.zeros((h, w), dtype=complex)
        for u in range(h):
            for v in range(w):
                acc[u, v] = sum(grid[i, j] * mh[u, i] * mw[v, j] for i in range(h) for j in range(w))
        out[idx] = acc
    return out


def cox_de_boor(t, i, k, x):
    """Textbook recursive B-spline basis B_{i,k} on knots ``t``."""
    if k == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    left = 0.0
    if t[i + k] != t[i]:
        left = (x - t[i]) / (t[i + k] - t[i]) * cox_de_boor(t, i, k - 1, x)
    right = 0.0
    if t[i + k + 1] != t[i + 1]:
        right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * cox_de_boor(t, i + 1, k - 1, x)
    return left + right


def iou(a, b):
    """Corner-form IoU of two (x1, y1, x2, y2) boxes, plain Python."""
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def brute_nms(boxes, scores, classes, iou_thr):
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    keep = []
    for i in order:
        if all(classes[j] != classes[i] or iou(boxes[i], boxes[j]) <= iou_thr for j in keep):
            keep.append(i)
    return sorted(keep)


def brute_ap(dets, gts, iou_thr):
    """Single-class AP by explicit prefix enumeration and 101-point interpolation.

    dets: list of (image_id, score, box); gts: list of (image_id, box).
    """
    if not gts:
        return None
    order = sorted(range(len(dets)), key=lambda i: -dets[i][1])
    points = []
    for k in range(1, len(order) + 1):
        used = set()
        tp = 0
        for i in order[:k]:
            img, _, box = dets[i]
            best, best_j = iou_thr, None
            for j, (gimg, gbox) in enumerate(gts):
                if gimg != img or j in used:
                    continue
                v = iou(box, gbox)
                if v >= best:
                    best, best_j = v, j
            if best_j is not None:
                used.add(best_j)
                tp += 1
        points.append((tp / len(gts), tp / k))
    total = 0.0
    for r in [i / 100 for i in range(101)]:
        cands = [p for rec, p in points if rec >= r - 1e-12]
        total += max(cands) if cands else 0.0
    return total / 101


def softmax_ref(v):
    m = max(v)
    e = [math.exp(a - m) for a in v]
    s = sum(e)
    return [a / s for a in e]
