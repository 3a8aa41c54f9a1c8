"""Asymmetric self-attention with value-derived bias, and the grouped spline transform."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Conv2d, InstanceNorm2d, Module, Parameter
from .tensor import Tensor, _emit, _sigmoid, softmax


@dataclass(frozen=True)
class AkatConfig:
    channels: int
    d_v: int | None = None
    d_qk: int | None = None
    heads: int = 1
    groups: int | None = None
    spline_order: int = 3
    grid_size: int = 8
    grid_range: float = 3.0
    prenorm: bool = True

    def __post_init__(self):
        dv, dqk, g = self.value_dim, self.qk_dim, self.kan_groups
        if self.heads < 1 or dv % self.heads or dqk % self.heads:
            raise ConfigError(f"d_qk={dqk} and d_v={dv} must be divisible by heads={self.heads}")
        if dqk > dv:
            raise ConfigError(f"d_qk={dqk} must not exceed d_v={dv}")
        if self.channels % g:
            raise ConfigError(f"channels={self.channels} not divisible by KAN groups={g}")
        if self.grid_size < 1 or self.spline_order < 0 or self.grid_range <= 0:
            raise ConfigError("invalid spline grid")

    @property
    def value_dim(self) -> int:
        return self.d_v if self.d_v is not None else self.channels

    @property
    def qk_dim(self) -> int:
        if self.d_qk is not None:
            return self.d_qk
        return max(self.heads, (self.value_dim // 4) // self.heads * self.heads)

    @property
    def kan_groups(self) -> int:
        if self.groups is not None:
            return self.groups
        return max(g for g in (1, 2, 4) if self.channels % g == 0)

    @property
    def num_basis(self) -> int:
        return self.grid_size + self.spline_order

    def knots(self) -> np.ndarray:
        k, r, n = self.spline_order, self.grid_range, self.grid_size
        step = 2.0 * r / n
        return -r + (np.arange(n + 2 * k + 1) - k) * step


# ---------------------------------------------------------------------------
# B-splines
# ---------------------------------------------------------------------------

def _basis_levels(x: np.ndarray, t: np.ndarray, order: int) -> list[np.ndarray]:
    """Cox-de Boor tables for degrees 0..order; each is [..., len(t) - d - 1]."""
    x = x[..., None]
    b = ((x >= t[:-1]) & (x < t[1:])).astype(np.float64)
    out = [b]
    for d in range(1, order + 1):
        left_den = t[d:-1] - t[:-d - 1]
        right_den = t[d + 1:] - t[1:-d]
        left = (x - t[:-d - 1]) / left_den * b[..., :-1]
        right = (t[d + 1:] - x) / right_den * b[..., 1:]
        b = left + right
        out.append(b)
    return out


def bspline_basis(x: np.ndarray, t: np.ndarray, order: int) -> np.ndarray:
    return _basis_levels(x, t, order)[-1]


def bspline_basis_derivative(x: np.ndarray, t: np.ndarray, order: int) -> np.ndarray:
    if order == 0:
        return np.zeros(x.shape + (len(t) - 1,))
    lower = _basis_levels(x, t, order - 1)[-1]
    a = order / (t[order:-1] - t[:-order - 1])
    b = order / (t[order + 1:] - t[1:-order])
    return a * lower[..., :-1] - b * lower[..., 1:]


def group_kan(x: Tensor, coef: Tensor, base: Tensor, cfg: AkatConfig) -> Tensor:
    """Per-channel ``sum_m coef[g,m] B_m(clip(x)) + base[g] * silu(x)``.

    Channel ``c`` belongs to group ``c // (C / G)``. The spline argument is
    clamped to ``[-r, r]``; the base path sees the raw input.
    """
    if x.ndim != 4:
        raise ShapeError(f"group_kan: expected [N,C,H,W], got {x.shape}")
    n_ch = x.shape[1]
    g = coef.shape[0]
    if n_ch % g or coef.shape[1] != cfg.num_basis or base.shape != (g,):
        raise ShapeError(f"group_kan: coef {coef.shape}/base {base.shape} incompatible with {n_ch} channels")
    t, k, r = cfg.knots(), cfg.spline_order, cfg.grid_range
    group_of = np.arange(n_ch) // (n_ch // g)
    xd = x.data
    xc = np.clip(xd, -r, r)
    basis = bspline_basis(xc, t, k)  # [N,C,H,W,M]
    per_ch = coef.data[group_of]  # [C,M]
    spline = np.einsum("nchwm,cm->nchw", basis, per_ch)
    sig = _sigmoid(xd)
    sl = xd * sig
    bch = base.data[group_of][None, :, None, None]
    out = spline + bch * sl

    def bw(gr):
        dbasis = bspline_basis_derivative(xc, t, k)
        inside = (xd >= -r) & (xd <= r)
        dspline = np.einsum("nchwm,cm->nchw", dbasis, per_ch) * inside
        dsilu = sig * (1.0 + xd * (1.0 - sig))
        gx = gr * (dspline + bch * dsilu)
        gcoef_ch = np.einsum("nchw,nchwm->cm", gr, basis)
        gcoef = np.zeros_like(coef.data)
        np.add.at(gcoef, group_of, gcoef_ch)
        gbase = np.zeros(g)
        np.add.at(gbase, group_of, (gr * sl).sum(axis=(0, 2, 3)))
        return gx, gcoef, gbase

    return _emit("group_kan", out, (x, coef, base), bw)


class GroupKan(Module):
    def __init__(self, cfg: AkatConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        g = cfg.kan_groups
        self.coef = Parameter(rng.normal(0.0, 0.1, size=(g, cfg.num_basis)))
        self.base = Parameter(np.ones(g))

    def forward(self, x: Tensor) -> Tensor:
        return group_kan(x, self.coef, self.base, self.cfg)


def spline_lipschitz(coef: np.ndarray, base: np.ndarray, cfg: AkatConfig) -> float:
    """Upper bound on |f'| for every group's scalar map."""
    step = 2.0 * cfg.grid_range / cfg.grid_size
    k = cfg.spline_order
    spline = k / step * np.abs(np.diff(coef, axis=1)).max() if k > 0 else 0.0
    return float(spline + 1.1 * np.abs(base).max())


# ---------------------------------------------------------------------------
# Attention
# ---------------------------------------------------------------------------

class AsymmetricAttention(Module):
    """Reduced-width Q/K, full-width V, per-key bias from a depthwise conv of V."""

    def __init__(self, cfg: AkatConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        c, dqk, dv = cfg.channels, cfg.qk_dim, cfg.value_dim
        self.q = Conv2d(c, dqk, 1, rng=rng)
        self.k = Conv2d(c, dqk, 1, rng=rng)
        self.v = Conv2d(c, dv, 1, rng=rng)
        self.pos = Conv2d(dv, dv, 3, groups=dv, rng=rng)
        self.out = Conv2d(dv, c, 1, rng=rng)
        self.out.weight.data *= 0.5

    def attend(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Return (pre-projection context [N,d_v,H,W], attention weights [N,h,T,T])."""
        if x.ndim != 4 or x.shape[1] != self.cfg.channels:
            raise ConfigError(f"attention expects {self.cfg.channels} channels, got shape {x.shape}")
        n, _, hh, ww = x.shape
        heads, dqk, dv = self.cfg.heads, self.cfg.qk_dim, self.cfg.value_dim
        tok = hh * ww
        dq, dvh = dqk // heads, dv // heads
        q = self.q(x).reshape(n, heads, dq, tok).transpose(0, 1, 3, 2)
        k = self.k(x).reshape(n, heads, dq, tok)
        v = self.v(x)
        bias = self.pos(v).reshape(n, heads, dvh, tok).mean(axis=2, keepdims=True)
        logits = (q @ k) * (1.0 / np.sqrt(dq)) + bias
        attn = softmax(logits, axis=-1)
        vt = v.reshape(n, heads, dvh, tok).transpose(0, 1, 3, 2)
        ctx = (attn @ vt).transpose(0, 1, 3, 2).reshape(n, dv, hh, ww)
        return ctx, attn

    def forward(self, x: Tensor, residual: bool = True) -> Tensor:
        ctx, _ = self.attend(x)
        y = self.out(ctx)
        return x + y if residual else y


def qk_parameter_count(channels: int, d_qk: int) -> int:
    """Weights and biases of the Q and K 1x1 projections."""
    return 2 * (channels * d_qk + d_qk)


class AkatKernel(Module):
    kind = "akat"

    def __init__(self, cfg: AkatConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        if cfg.prenorm:
            self.norm1 = InstanceNorm2d(cfg.channels)
            self.norm2 = InstanceNorm2d(cfg.channels)
        self.attn = AsymmetricAttention(cfg, rng)
        self.kan = GroupKan(cfg, rng)

    def forward(self, x: Tensor) -> Tensor:
        if self.cfg.prenorm:
            y = x + self.attn(self.norm1(x), residual=False)
            return y + self.kan(self.norm2(y))
        y = self.attn(x)
        return y + self.kan(y)
