"""Convolution, pooling and spatial resampling ops on NCHW tensors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError
from .tensor import Tensor, _emit, mean


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    groups: int = 1
    bias: bool = True

    def __post_init__(self):
        if self.groups < 1 or self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ConfigError(f"padding must be >= 0, got {self.padding}")
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ConfigError("kernel extents must be positive")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_h, self.kernel_w)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        ho = (h + 2 * self.padding - self.kernel_h) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel_w) // self.stride + 1
        return ho, wo


def _require_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected a 4-d [N,C,H,W] tensor, got shape {x.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, *, stride: int = 1,
           padding: int = 0, groups: int = 1) -> Tensor:
    """Cross-correlation with zero padding; grouped channels are contiguous blocks."""
    _require_4d(x, "conv2d")
    n, cin, h, w = x.shape
    cout, cg, kh, kw = weight.shape
    spec = ConvSpec(cin, cout, kh, kw, stride, padding, groups, bias is not None)
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"conv2d: weight shape {weight.shape} != expected {spec.weight_shape}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"conv2d: input {h}x{w} (pad {padding}) smaller than kernel {kh}x{kw}")
    ho, wo = spec.output_hw(h, w)
    g = groups
    cog = cout // g
    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    if kh == 1 and kw == 1:
        cols = xp[:, :, ::stride, ::stride][:, :, :ho, :wo].reshape(n, g, cg, ho * wo)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
        cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, g, cg * kh * kw, ho * wo)
    wmat = weight.data.reshape(g, cog, cg * kh * kw)
    out = np.matmul(wmat, cols).reshape(n, cout, ho, wo)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    hp, wp = xp.shape[2], xp.shape[3]

    def bw(gout):
        gm = gout.reshape(n, g, cog, ho * wo)
        gw = np.matmul(gm, cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(weight.shape)
        gcols = np.matmul(wmat.transpose(0, 2, 1), gm).reshape(n, cin, kh, kw, ho, wo)
        gxp = np.zeros((n, cin, hp, wp))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        gb = gout.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return _emit("conv2d", out, inputs, bw)


def depthwise_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, *, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """One filter per channel; ``weight`` is [C,1,kh,kw]."""
    _require_4d(x, "depthwise_conv2d")
    return conv2d(x, weight, bias, stride=stride, padding=padding, groups=x.shape[1])


def max_pool2d(x: Tensor, kernel: int = 2, stride: int | None = None) -> Tensor:
    _require_4d(x, "max_pool2d")
    stride = stride or kernel
    n, c, h, w = x.shape
    if h < kernel or w < kernel:
        raise ShapeError(f"max_pool2d: input {h}x{w} smaller than kernel {kernel}")
    ho, wo = (h - kernel) // stride + 1, (w - kernel) // stride + 1
    win = sliding_window_view(x.data, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    flat = win.reshape(n, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gx = np.zeros((n, c, h, w))
        for k in range(kernel * kernel):
            i, j = divmod(k, kernel)
            gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += g * (arg == k)
        return (gx,)

    return _emit("max_pool2d", out, (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    _require_4d(x, "global_avg_pool")
    return mean(x, axis=(2, 3), keepdims=True)


def spatial_select(x: Tensor, sel_h: np.ndarray, sel_w: np.ndarray, op: str = "spatial_select") -> Tensor:
    """Apply fixed linear maps along H and W: ``out = sel_h @ x @ sel_w.T``.

    Padding, flips and nearest-neighbour resizing are all 0/1 selection
    matrices, so they share this single differentiable primitive.
    """
    _require_4d(x, op)
    if sel_h.shape[1] != x.shape[2] or sel_w.shape[1] != x.shape[3]:
        raise ShapeError(f"{op}: selection {sel_h.shape}/{sel_w.shape} does not fit input {x.shape}")
    out = np.matmul(np.matmul(sel_h, x.data), sel_w.T)
    return _emit(op, out, (x,), lambda g: (np.matmul(np.matmul(sel_h.T, g), sel_w),))


def _pad_index(n: int, before: int, after: int, mode: str) -> np.ndarray:
    idx = np.arange(-before, n + after)
    if mode == "replicate":
        return np.clip(idx, 0, n - 1)
    if mode == "reflect":
        if n < 2:
            return np.zeros_like(idx)
        period = 2 * (n - 1)
        idx = np.abs(idx) % period
        return np.where(idx >= n, period - idx, idx)
    return idx


def _selection(n: int, before: int, after: int, mode: str) -> np.ndarray:
    idx = _pad_index(n, before, after, mode)
    sel = np.zeros((idx.size, n))
    valid = (idx >= 0) & (idx < n)
    sel[np.nonzero(valid)[0], idx[valid]] = 1.0
    return sel


def pad2d(x: Tensor, pad: tuple[int, int, int, int], mode: str = "zeros") -> Tensor:
    """``pad`` is (top, bottom, left, right); modes: zeros, replicate, reflect."""
    if mode not in ("zeros", "replicate", "reflect"):
        raise ConfigError(f"unknown padding mode {mode!r}")
    top, bottom, left, right = pad
    _require_4d(x, "pad2d")
    sh = _selection(x.shape[2], top, bottom, mode)
    sw = _selection(x.shape[3], left, right, mode)
    return spatial_select(x, sh, sw, op=f"pad2d[{mode}]")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    _require_4d(x, "upsample_nearest")
    sh = np.repeat(np.eye(x.shape[2]), factor, axis=0)
    sw = np.repeat(np.eye(x.shape[3]), factor, axis=0)
    return spatial_select(x, sh, sw, op="upsample_nearest")


def resize_nearest(x: Tensor, size: tuple[int, int]) -> Tensor:
    _require_4d(x, "resize_nearest")
    h, w = x.shape[2], x.shape[3]
    ih = (np.arange(size[0]) * h) // size[0]
    iw = (np.arange(size[1]) * w) // size[1]
    sh = np.zeros((size[0], h))
    sh[np.arange(size[0]), ih] = 1.0
    sw = np.zeros((size[1], w))
    sw[np.arange(size[1]), iw] = 1.0
    return spatial_select(x, sh, sw, op="resize_nearest")
