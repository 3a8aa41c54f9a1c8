import numpy as np

from freqdet.gradcheck import finite_diff_check
from freqdet.loss import assign_layer, build_targets, decode_pixel_boxes, detection_loss, focal_loss, giou_loss
from freqdet.tensor import Tensor


def test_layer_assignment():
    assert assign_layer(8, (2, 4)) == 2
    assert assign_layer(30, (2, 4)) == 4
    assert assign_layer(16, (3, 4, 5)) == 3


def test_targets_centre_cell():
    ann = [np.array([[1, 0.3, 0.6, 0.1, 0.1]]), np.zeros((0, 5))]
    t = build_targets(ann, (2, 4), 3, (64, 64))
    assert t[4].cls.sum() == 0 and len(t[4].boxes) == 0
    assert t[2].cls.sum() == 1 and t[2].cls[0, 1, int(0.6 * 64 // 4), int(0.3 * 64 // 4)] == 1
    assert np.allclose(t[2].boxes[0], [19.2 - 3.2, 38.4 - 3.2, 19.2 + 3.2, 38.4 + 3.2])


def test_focal_matches_reference(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    t = (rng.random((2, 3, 4, 4)) < 0.2).astype(float)
    p = 1 / (1 + np.exp(-x))
    ce = -(t * np.log(p) + (1 - t) * np.log(1 - p))
    pt = t * p + (1 - t) * (1 - p)
    at = t * 0.25 + (1 - t) * 0.75
    ref = (at * (1 - pt) ** 2 * ce).sum()
    assert abs(float(focal_loss(Tensor(x), t).data) - ref) <= 1e-10


def test_giou_zero_for_exact_boxes():
    tgt = np.array([[2.0, 3.0, 10.0, 7.0]])
    pred = [Tensor(tgt[:, c]) for c in range(4)]
    assert abs(float(giou_loss(pred, tgt).data)) <= 1e-12


def test_giou_disjoint_exceeds_one():
    tgt = np.array([[0.0, 0.0, 1.0, 1.0]])
    pred = [Tensor(np.array([v])) for v in (2.0, 2.0, 3.0, 3.0)]
    # hull 9, union 2: GIoU = 0 - 7/9
    assert abs(float(giou_loss(pred, tgt).data) - (1 + 7 / 9)) <= 1e-12


def test_decode_pixels():
    raw = np.zeros((1, 4, 2, 2))
    x0, y0, x1, y1 = decode_pixel_boxes(Tensor(raw), (np.array([0]), np.array([1]), np.array([0])), 4)
    assert np.allclose([x0.data[0], y0.data[0], x1.data[0], y1.data[0]], [0, 4, 4, 8])


def test_detection_loss_gradcheck(rng):
    ann = [np.array([[0, 0.3, 0.3, 0.12, 0.1], [1, 0.7, 0.6, 0.4, 0.45]])]
    targets = build_targets(ann, (2, 4), 2, (32, 32))
    c2, b2 = Tensor(rng.standard_normal((1, 2, 8, 8))), Tensor(0.3 * rng.standard_normal((1, 4, 8, 8)))
    c4, b4 = Tensor(rng.standard_normal((1, 2, 2, 2))), Tensor(0.3 * rng.standard_normal((1, 4, 2, 2)))

    def f(c2, b2, c4, b4):
        return detection_loss({2: (c2, b2), 4: (c4, b4)}, targets)[0]

    rep = finite_diff_check(f, [c2, b2, c4, b4])
    assert rep.passed, rep.summary()
