import numpy as np
import pytest

from freqdet.cpf import (CPF, PRConv, RepBranches, branch_forward, merge_reparam, partial_width,
                         repconv_parameter_count)
from freqdet.errors import ConfigError
from freqdet.gradcheck import finite_diff_check
from freqdet.tensor import GradTape, Tensor

from oracles import naive_conv2d


def T(a):
    return Tensor(np.asarray(a, dtype=float))


def _random_branches(rng, cp):
    return RepBranches(rng.standard_normal((cp, cp, 3, 3)), rng.standard_normal(cp),
                       rng.standard_normal((cp, cp, 1, 1)), rng.standard_normal(cp),
                       rng.standard_normal(cp))


def _zero_prconv(p):
    for name in ("w3", "b3", "w1", "b1"):
        getattr(p, name).data[:] = 0
    p.id_scale.data[:] = 1


def test_partial_width():
    assert partial_width(8, 0.25) == 2
    with pytest.raises(ConfigError):
        partial_width(6, 0.25)
    with pytest.raises(ConfigError):
        partial_width(2, 0.25)


def test_zero_branches_identity(rng):
    p = PRConv(8, rng=rng)
    _zero_prconv(p)
    x = rng.standard_normal((2, 8, 5, 5))
    assert np.array_equal(p(T(x)).data, x)


def test_untouched_channels_bitwise(rng):
    p = PRConv(8, rng=rng)
    assert p.cp == 2
    x = rng.standard_normal((1, 8, 5, 5))
    x2 = x.copy()
    x2[:, 5] += 3.0
    y, y2 = p(T(x)).data, p(T(x2)).data
    assert np.array_equal(y[:, 2:], x[:, 2:]) and np.array_equal(y2[:, 2:], x2[:, 2:])
    assert np.array_equal(y[:, :2], y2[:, :2])


def test_forward_matches_slice_oracle(rng):
    p = PRConv(16, rng=rng)
    br = _random_branches(rng, 4)
    p.w3.data, p.b3.data, p.w1.data, p.b1.data, p.id_scale.data = br.w3, br.b3, br.w1, br.b1, br.id_scale
    x = rng.standard_normal((1, 16, 6, 7))
    s = x[:, :4]
    conv = (naive_conv2d(s, br.w3, br.b3, padding=1) + naive_conv2d(s, br.w1, br.b1)
            + s * br.id_scale[None, :, None, None])
    ref = np.concatenate([conv, x[:, 4:]], axis=1)
    assert np.abs(p(T(x)).data - ref).max() <= 1e-12


def test_merge_identity_is_delta():
    cp = 3
    m = merge_reparam(RepBranches(np.zeros((cp, cp, 3, 3)), np.zeros(cp), np.zeros((cp, cp, 1, 1)),
                                  np.zeros(cp), np.ones(cp)))
    ref = np.zeros((cp, cp, 3, 3))
    ref[np.arange(cp), np.arange(cp), 1, 1] = 1
    assert np.array_equal(m.weight, ref) and np.array_equal(m.bias, np.zeros(cp))


def test_merge_embeds_pointwise(rng):
    cp = 3
    w = rng.standard_normal((cp, cp, 1, 1))
    m = merge_reparam(RepBranches(np.zeros((cp, cp, 3, 3)), np.zeros(cp), w, np.zeros(cp), np.zeros(cp)))
    ref = np.zeros((cp, cp, 3, 3))
    ref[:, :, 1, 1] = w[:, :, 0, 0]
    assert np.array_equal(m.weight, ref)


def test_merge_equivalence_random(rng):
    br = _random_branches(rng, 4)
    m = merge_reparam(br)
    x = rng.standard_normal((2, 4, 7, 5))
    merged = naive_conv2d(x, m.weight, m.bias, padding=1)
    assert np.abs(merged - branch_forward(T(x), br).data).max() <= 1e-9


def test_train_deploy_equivalence_100_inputs(rng):
    p = PRConv(8, rng=rng)
    p.b3.data = rng.standard_normal(2)
    p.b1.data = rng.standard_normal(2)
    p.id_scale.data = rng.standard_normal(2)
    xs = [rng.standard_normal((1, 8, 6, 6)) for _ in range(100)]
    before = [p(T(x)).data for x in xs]
    p.switch_to_deploy()
    assert set(p.state_dict()) == {"weight", "bias"}
    worst = max(np.abs(p(T(x)).data - b).max() for x, b in zip(xs, before))
    assert worst <= 1e-9


def test_isolation_gradient(rng):
    """Varying only untouched channels leaves the 3x3 kernel gradient at zero."""
    p = PRConv(8, rng=rng)
    x = T(rng.standard_normal((1, 8, 4, 4)), )
    x.requires_grad = True
    mask = np.zeros((1, 8, 4, 4))
    mask[:, 2:] = rng.standard_normal((1, 6, 4, 4))
    with GradTape() as tape:
        loss = (p(x) * T(mask)).sum()
    g = tape.backward(loss, accumulate=False)
    assert np.all(g.get(p.w3, np.zeros(1)) == 0)
    assert np.array_equal(g[x][:, 2:], mask[:, 2:])


def test_parameter_count():
    c, frac = 32, 0.25
    p = PRConv(c, frac)
    cp = int(c * frac)
    assert p.num_parameters() == repconv_parameter_count(cp)
    assert p.num_parameters() < frac * repconv_parameter_count(c)


def test_cpf_zero_weights_residual(rng):
    blk = CPF(8, rng=rng)
    blk.contract.weight.data[:] = 0
    blk.contract.bias.data[:] = 0
    x = rng.standard_normal((1, 8, 4, 4))
    assert np.array_equal(blk(T(x)).data, x)


def test_cpf_inverse_maps_double(rng):
    c = 8
    blk = CPF(c, act=False, rng=rng)
    _zero_prconv(blk.prconv)
    a = rng.standard_normal((2 * c, c))
    blk.expand.weight.data = a.reshape(2 * c, c, 1, 1)
    blk.expand.bias.data[:] = 0
    blk.contract.weight.data = np.linalg.pinv(a).reshape(c, 2 * c, 1, 1)
    blk.contract.bias.data[:] = 0
    x = rng.standard_normal((1, c, 5, 5))
    y = blk(T(x)).data
    h = naive_conv2d(x, blk.expand.weight.data, blk.expand.bias.data)
    ref = x + naive_conv2d(h, blk.contract.weight.data, blk.contract.bias.data)
    assert np.abs(y - ref).max() <= 1e-12
    assert np.abs(y - 2 * x).max() <= 1e-10


def test_cpf_gradcheck(rng):
    blk = CPF(8, rng=rng)
    x = T(rng.standard_normal((1, 8, 6, 6)))
    rep = finite_diff_check(lambda x, *p: blk(x), [x] + blk.parameters(), max_checks=400)
    assert rep.passed, rep.summary()


def test_cpf_deploy_equivalence(rng):
    blk = CPF(8, rng=rng)
    x = T(rng.standard_normal((1, 8, 6, 6)))
    before = blk(x).data
    blk.switch_to_deploy()
    assert np.abs(blk(x).data - before).max() <= 1e-9
