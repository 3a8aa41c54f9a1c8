import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqdet.boxes import (box_iou, classwise_nms, cxcywh_to_xyxy, decode_and_nms, decode_layer, nms,
                           xyxy_to_cxcywh)
from freqdet.errors import ConfigError

from oracles import brute_nms, iou


def random_boxes(rng, n, clustered=True):
    centres = rng.uniform(0.2, 0.8, (3, 2)) if clustered else None
    out = []
    for _ in range(n):
        c = centres[rng.integers(3)] + rng.normal(0, 0.03, 2) if clustered else rng.uniform(0, 1, 2)
        wh = rng.uniform(0.05, 0.2, 2)
        out.append(np.r_[c - wh / 2, c + wh / 2])
    return np.array(out)


def test_identical_boxes_keep_higher():
    b = np.array([[0.1, 0.1, 0.3, 0.3]] * 2)
    assert list(nms(b, np.array([0.8, 0.9]), 0.5)) == [1]


def test_disjoint_all_survive():
    b = np.array([[0, 0, 0.1, 0.1], [0.5, 0.5, 0.6, 0.6], [0.8, 0.1, 0.9, 0.2]])
    assert sorted(nms(b, np.array([0.3, 0.9, 0.5]), 0.5)) == [0, 1, 2]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 40), st.sampled_from([0.3, 0.5, 0.7]))
def test_classwise_nms_matches_brute_force(seed, n, thr):
    rng = np.random.default_rng(seed)
    boxes = random_boxes(rng, n)
    scores = rng.permutation(n) / n + 0.01  # distinct scores
    classes = rng.integers(0, 3, n)
    got = list(classwise_nms(boxes, scores, classes, thr))
    assert got == brute_nms([tuple(b) for b in boxes], list(scores), list(classes), thr)


def test_iou_matches_scalar_oracle(rng):
    a, b = random_boxes(rng, 20), random_boxes(rng, 15)
    m = box_iou(a, b)
    ref = np.array([[iou(x, y) for y in b] for x in a])
    assert np.abs(m - ref).max() <= 1e-15


def test_corner_conversion_roundtrip(rng):
    b = rng.uniform(0, 1, (10, 4))
    assert np.allclose(xyxy_to_cxcywh(cxcywh_to_xyxy(b)), b)


def test_decode_layer_geometry():
    cls = np.zeros((1, 2, 2))
    raw = np.zeros((4, 2, 2))
    scores, boxes = decode_layer(cls, raw, 4, (8, 8))
    assert np.allclose(scores, 0.5)
    # cell (i=1, j=0): centre (0.5 + 0) * 4 / 8, (0.5 + 1) * 4 / 8, size exp(0) * 4 / 8
    assert np.allclose(boxes[2], [0.25, 0.75, 0.5, 0.5])


def test_decode_and_nms_end_to_end():
    cls = np.full((1, 1, 4, 4), -10.0)
    cls[0, 0, 1, 2] = 5.0
    cls[0, 0, 3, 3] = 1.0
    raw = {2: (cls, np.zeros((1, 4, 4, 4)))}
    dets = decode_and_nms(raw, (16, 16), 0.3, 0.5, image_id=7)
    assert len(dets) == 2 and dets[0].conf > dets[1].conf
    assert dets[0].image_id == 7 and dets[0].cls == 0
    assert np.allclose([dets[0].cx, dets[0].cy, dets[0].w, dets[0].h], [10 / 16, 6 / 16, 0.25, 0.25])
    for d in dets:
        x0, y0, x1, y1 = d.corners()
        assert 0 <= x0 <= x1 <= 1 and 0 <= y0 <= y1 <= 1 and 0 <= d.conf <= 1


def test_edge_boxes_clamped():
    cls = np.full((1, 1, 2, 2), 5.0)
    box = np.full((1, 4, 2, 2), 3.0)  # large boxes spilling past the border
    for d in decode_and_nms({2: (cls, box)}, (8, 8), 0.5, 0.99):
        x0, y0, x1, y1 = d.corners()
        assert x0 >= -1e-12 and y0 >= -1e-12 and x1 <= 1 + 1e-12 and y1 <= 1 + 1e-12


@pytest.mark.parametrize("conf,iou_thr", [(0.0, 0.5), (0.5, 1.0), (1.2, 0.5)])
def test_threshold_validation(conf, iou_thr):
    with pytest.raises(ConfigError):
        decode_and_nms({2: (np.zeros((1, 1, 2, 2)), np.zeros((1, 4, 2, 2)))}, (8, 8), conf, iou_thr)
