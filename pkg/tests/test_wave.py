import numpy as np
import pytest

from freqdet.conv import conv2d
from freqdet.errors import ShapeError
from freqdet.frequency import WaveletBands, hwt, ihwt
from freqdet.gradcheck import finite_diff_check
from freqdet.hsg import HsgBlock, HsgConfig
from freqdet.tensor import Tensor, concat, split
from freqdet.wave import WaveConfig, WaveKernel, identity_band_mixing, wave_forward, wave_receptive_probe


def T(a):
    return Tensor(np.asarray(a, dtype=float))


def _set(kernel, weights, bias=0.0):
    for conv, w in zip(kernel.levels, weights):
        conv.weight.data = np.array(w, dtype=float)
        if conv.bias is not None:
            conv.bias.data[:] = bias


def test_depth_one_identity(rng):
    cfg = WaveConfig(3, depth=1)
    k = WaveKernel(cfg, rng)
    _set(k, identity_band_mixing(cfg))
    x = rng.standard_normal((1, 3, 8, 8))
    assert np.abs(k(T(x)).data - x).max() <= 1e-10


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_prior_aware_identity_cascade(rng, depth):
    cfg = WaveConfig(2, depth=depth)
    k = WaveKernel(cfg, rng)
    _set(k, identity_band_mixing(cfg))
    x = rng.standard_normal((2, 2, 16, 16))
    assert np.abs(k(T(x)).data - x).max() <= 1e-9


def test_zero_params_give_zero(rng):
    cfg = WaveConfig(2, depth=2)
    k = WaveKernel(cfg, rng)
    for conv in k.levels:
        conv.weight.data[:] = 0
        conv.bias.data[:] = 0
    assert np.all(k(T(rng.standard_normal((1, 2, 8, 8)))).data == 0)


def test_two_level_unrolled(rng):
    c = 4
    cfg = WaveConfig(c, depth=2)
    k = WaveKernel(cfg, rng)
    for conv in k.levels:
        conv.bias.data = rng.standard_normal(conv.bias.shape)
    x = T(rng.standard_normal((1, c, 8, 8)))
    (w1, b1), (w2, b2) = [(T(m.weight.data), T(m.bias.data)) for m in k.levels]

    b_1 = hwt(x)
    b_2 = hwt(b_1.ll)
    m2 = conv2d(concat(b_2.as_list()), w2, b2, padding=2, groups=4)
    r2 = ihwt(WaveletBands(*split(m2, [c] * 4)))
    m1 = conv2d(concat(b_1.as_list()), w1, b1, padding=2, groups=4)
    ll, lh, hl, hh = split(m1, [c] * 4)
    ref = ihwt(WaveletBands(ll + r2, lh, hl, hh))
    assert np.abs(k(x).data - ref.data).max() <= 1e-10


def test_linearity_without_bias(rng):
    cfg = WaveConfig(2, depth=2, bias=False)
    k = WaveKernel(cfg, rng)
    x, y = rng.standard_normal((2, 1, 2, 8, 8))
    lhs = k(T(1.5 * x - 2.0 * y)).data
    rhs = 1.5 * k(T(x)).data - 2.0 * k(T(y)).data
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_indivisible_extent(rng):
    k = WaveKernel(WaveConfig(2, depth=2), rng)
    with pytest.raises(ShapeError):
        k(T(np.zeros((1, 2, 12, 10))))


@pytest.mark.parametrize("depth", [1, 2])
def test_gradcheck(rng, depth):
    cfg = WaveConfig(2, depth=depth)
    k = WaveKernel(cfg, rng)
    x = T(rng.standard_normal((1, 2, 8, 8)))
    rep = finite_diff_check(lambda x, *p: k(x), [x] + k.parameters())
    assert rep.passed, rep.summary()


class TestReceptiveField:
    def test_depth_one_bounded(self):
        support = wave_receptive_probe(WaveConfig(2, depth=1), size=64)
        rows, cols = np.nonzero(support)
        # 5x5 taps on the half-resolution bands: at most (5 + 1) * 2 input pixels per axis
        assert rows.max() - rows.min() + 1 <= 12
        assert cols.max() - cols.min() + 1 <= 12

    def test_monotone_in_depth(self):
        areas = [wave_receptive_probe(WaveConfig(2, depth=d), size=64).sum() for d in (1, 2, 3)]
        assert areas[0] < areas[1] < areas[2]

    def test_zero_params_empty(self):
        cfg = WaveConfig(2, depth=2)
        k = WaveKernel(cfg)
        for p in k.parameters():
            p.data[:] = 0
        assert wave_receptive_probe(cfg, size=16, kernel=k).sum() == 0


def test_inside_hsg_block(rng):
    cfg = HsgConfig(16)
    kernel = WaveKernel(WaveConfig(cfg.stream_widths[2], depth=2), rng)
    block = HsgBlock(cfg, kernel, rng)
    x = T(rng.standard_normal((1, 16, 8, 8)))
    assert block(x).shape == x.shape
