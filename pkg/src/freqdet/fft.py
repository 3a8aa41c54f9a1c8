"""Complex discrete Fourier transforms for arbitrary lengths.

Composite lengths use recursive mixed-radix decimation in time (smallest
prime factor first). Prime lengths up to ``_DIRECT_MAX`` use a direct DFT
matrix; larger primes go through Bluestein's chirp-z algorithm, whose
power-of-two convolution re-enters the radix-2 path.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

_DIRECT_MAX = 16


@lru_cache(maxsize=None)
def _smallest_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(n: int, sign: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / n)


@lru_cache(maxsize=None)
def _twiddles(p: int, m: int, sign: int) -> np.ndarray:
    r = np.arange(p)[:, None]
    k = np.arange(m)[None, :]
    return np.exp(sign * 2j * np.pi * r * k / (p * m))


@lru_cache(maxsize=None)
def _chirp(n: int, sign: int) -> tuple[np.ndarray, np.ndarray, int]:
    k = np.arange(n)
    w = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1
    while size < 2 * n - 1:
        size *= 2
    b = np.zeros(size, dtype=np.complex128)
    b[:n] = np.conj(w)
    b[size - n + 1:] = np.conj(w[1:])[::-1]
    return w, _transform(b, size, -1), size


def _bluestein(x: np.ndarray, n: int, sign: int) -> np.ndarray:
    w, fb, size = _chirp(n, sign)
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * w
    conv = _transform(_transform(a, size, -1) * fb, size, +1) / size
    return conv[..., :n] * w


def _transform(x: np.ndarray, n: int, sign: int) -> np.ndarray:
    if n == 1:
        return x.copy()
    p = _smallest_factor(n)
    if p == n:
        if n <= _DIRECT_MAX:
            return x @ _dft_matrix(n, sign).T
        return _bluestein(x, n, sign)
    m = n // p
    # sub[..., r, k] = x[..., k*p + r]
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2)
    f = _transform(np.ascontiguousarray(sub), m, sign) * _twiddles(p, m, sign)
    out = _dft_matrix(p, sign) @ f  # out[..., q, k] -> bin q*m + k
    return out.reshape(x.shape[:-1] + (n,))


def fft(x: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
    """Unnormalized forward DFT, or the inverse with its 1/n factor."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    n = x.shape[-1]
    out = _transform(np.ascontiguousarray(x), n, +1 if inverse else -1)
    if inverse:
        out = out / n
    return np.moveaxis(out, -1, axis)


def fft2(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """2-D transform over the last two axes."""
    return fft(fft(x, -1, inverse), -2, inverse)


def dft_direct(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """O(n^2) summation along the last axis; reference for tests."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    sign = 1 if inverse else -1
    k = np.arange(n)
    out = np.einsum("...j,kj->...k", x, np.exp(sign * 2j * np.pi * np.outer(k, k) / n))
    return out / n if inverse else out
