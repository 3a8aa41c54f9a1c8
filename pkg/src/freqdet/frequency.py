"""Differentiable spectral primitives: Haar wavelets, 2-D DFT, Sobel gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fft as _fft
from .conv import depthwise_conv2d, pad2d
from .errors import ShapeError
from .tensor import Tensor, _emit, concat, split, sqrt


# ---------------------------------------------------------------------------
# Haar wavelet
# ---------------------------------------------------------------------------

@dataclass
class WaveletBands:
    """One level of orthonormal Haar sub-bands, each [N,C,H/2,W/2]."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __post_init__(self):
        shapes = {self.ll.shape, self.lh.shape, self.hl.shape, self.hh.shape}
        if len(shapes) != 1:
            raise ShapeError(f"wavelet bands disagree in shape: {sorted(shapes)}")

    def as_list(self) -> list[Tensor]:
        return [self.ll, self.lh, self.hl, self.hh]


@dataclass
class WaveletPyramid:
    """Levels ordered finest (index 0) to coarsest; only each LL is re-decomposed."""

    levels: list[WaveletBands]

    @property
    def depth(self) -> int:
        return len(self.levels)


def _hwt_np(x: np.ndarray) -> np.ndarray:
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (-a - b + c + d) * 0.5
    hl = (-a + b - c + d) * 0.5
    hh = (a - b - c + d) * 0.5
    return np.concatenate([ll, lh, hl, hh], axis=1)


def _ihwt_np(y: np.ndarray) -> np.ndarray:
    n, c4, h, w = y.shape
    ll, lh, hl, hh = np.split(y, 4, axis=1)
    out = np.empty((n, c4 // 4, 2 * h, 2 * w))
    out[..., 0::2, 0::2] = (ll - lh - hl + hh) * 0.5
    out[..., 0::2, 1::2] = (ll - lh + hl - hh) * 0.5
    out[..., 1::2, 0::2] = (ll + lh - hl - hh) * 0.5
    out[..., 1::2, 1::2] = (ll + lh + hl + hh) * 0.5
    return out


def hwt_stacked(x: Tensor) -> Tensor:
    """Haar analysis returning bands stacked band-major: [N, 4C, H/2, W/2]."""
    if x.ndim != 4:
        raise ShapeError(f"hwt: expected [N,C,H,W], got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"hwt: spatial extents must be even, got {x.shape[2]}x{x.shape[3]}")
    # orthonormal, so the adjoint is the inverse
    return _emit("hwt", _hwt_np(x.data), (x,), lambda g: (_ihwt_np(g),))


def ihwt_stacked(y: Tensor) -> Tensor:
    """Inverse of :func:`hwt_stacked`."""
    if y.ndim != 4 or y.shape[1] % 4:
        raise ShapeError(f"ihwt: expected [N,4C,h,w], got {y.shape}")
    return _emit("ihwt", _ihwt_np(y.data), (y,), lambda g: (_hwt_np(g),))


def hwt(x: Tensor) -> WaveletBands:
    c = x.shape[1] if x.ndim == 4 else 0
    return WaveletBands(*split(hwt_stacked(x), [c] * 4, axis=1))


def ihwt(bands: WaveletBands) -> Tensor:
    return ihwt_stacked(concat(bands.as_list(), axis=1))


def wavelet_decompose(x: Tensor, depth: int) -> WaveletPyramid:
    if depth < 1:
        raise ShapeError(f"wavelet depth must be >= 1, got {depth}")
    f = 2 ** depth
    if x.ndim != 4 or x.shape[2] % f or x.shape[3] % f:
        raise ShapeError(f"extents {x.shape[2:]} not divisible by 2^{depth}")
    levels = []
    cur = x
    for _ in range(depth):
        bands = hwt(cur)
        levels.append(bands)
        cur = bands.ll
    return WaveletPyramid(levels)


def wavelet_reconstruct(p: WaveletPyramid) -> Tensor:
    rec = p.levels[-1].ll
    for bands in reversed(p.levels):
        rec = ihwt(WaveletBands(rec, bands.lh, bands.hl, bands.hh))
    return rec


# ---------------------------------------------------------------------------
# Fourier
# ---------------------------------------------------------------------------

@dataclass
class Spectrum:
    """Full complex grid as a pair of real tensors."""

    re: Tensor
    im: Tensor

    def __mul__(self, other: "Spectrum") -> "Spectrum":
        return Spectrum(self.re * other.re - self.im * other.im,
                        self.re * other.im + self.im * other.re)


def _split_complex(z: np.ndarray, with_imag: bool):
    return (z.real.copy(), z.imag.copy()) if with_imag else (z.real.copy(),)


def _spectral_op(name: str, xr: Tensor, xi: Tensor | None, inverse: bool) -> Spectrum:
    z = xr.data if xi is None else xr.data + 1j * xi.data
    out = _fft.fft2(z, inverse=inverse)
    n = out.shape[-1] * out.shape[-2]
    inputs = (xr,) if xi is None else (xr, xi)
    with_imag = xi is not None

    # adjoint of the unnormalized DFT is the unnormalized inverse; of the
    # normalized inverse, the forward DFT divided by n
    def adjoint(g: np.ndarray) -> np.ndarray:
        if inverse:
            return _fft.fft2(g) / n
        return _fft.fft2(g, inverse=True) * n

    re = _emit(f"{name}.re", out.real.copy(), inputs,
               lambda g: _split_complex(adjoint(g), with_imag))
    im = _emit(f"{name}.im", out.imag.copy(), inputs,
               lambda g: _split_complex(adjoint(1j * g), with_imag))
    return Spectrum(re, im)


def fft2d(x: Tensor, imag: Tensor | None = None) -> Spectrum:
    """Unnormalized 2-D DFT over the last two axes (any extents)."""
    return _spectral_op("fft2d", x, imag, inverse=False)


def ifft2d(s: Spectrum) -> Spectrum:
    """Inverse 2-D DFT including the 1/(H*W) factor."""
    return _spectral_op("ifft2d", s.re, s.im, inverse=True)


def ifft2d_real(s: Spectrum) -> Tensor:
    """Real part of :func:`ifft2d` (the imaginary part is discarded)."""
    return ifft2d(s).re


def conj_flip_index(n: int) -> np.ndarray:
    """Index of the bin at -k for every bin k of a length-n DFT."""
    return (-np.arange(n)) % n


# ---------------------------------------------------------------------------
# Sobel
# ---------------------------------------------------------------------------

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
SOBEL_EPS = 1e-12


def sobel_gradients(x: Tensor, padding: str = "zeros", eps: float = SOBEL_EPS):
    """Per-channel Sobel responses ``(gx, gy, magnitude)``."""
    if x.ndim != 4:
        raise ShapeError(f"sobel: expected [N,C,H,W], got {x.shape}")
    if x.shape[2] < 3 or x.shape[3] < 3:
        raise ShapeError(f"sobel: extents must be >= 3, got {x.shape[2]}x{x.shape[3]}")
    c = x.shape[1]
    kx = Tensor(np.broadcast_to(SOBEL_X, (c, 1, 3, 3)))
    ky = Tensor(np.broadcast_to(SOBEL_Y, (c, 1, 3, 3)))
    if padding == "zeros":
        gx = depthwise_conv2d(x, kx, padding=1)
        gy = depthwise_conv2d(x, ky, padding=1)
    else:
        xp = pad2d(x, (1, 1, 1, 1), mode=padding)
        gx = depthwise_conv2d(xp, kx)
        gy = depthwise_conv2d(xp, ky)
    mag = sqrt(gx * gx + gy * gy + eps)
    return gx, gy, mag
