"""Dense float64 tensors with a tape-based reverse-mode differentiation engine.

Operations executed while a :class:`GradTape` is active (and touching at
least one tensor that requires a gradient) append a record to the tape.
Because records are appended in execution order the tape is already
topologically sorted; :meth:`GradTape.backward` walks it in reverse.

Outside a tape nothing is recorded, which makes inference cheap.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NonFiniteError, ShapeError

_state = threading.local()


def _current_tape() -> "GradTape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """N-dimensional float64 array that can take part in differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.writeable:
            arr = arr.copy()
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class OpRecord:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class GradTape:
    """Ordered record of differentiable operations.

    Use as a context manager; tapes nest (the innermost one records).
    A tape is single-writer: do not share one across threads.
    """

    records: list[OpRecord] = field(default_factory=list)

    def __enter__(self) -> "GradTape":
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, fn: BackwardFn) -> None:
        self.records.append(OpRecord(op, inputs, output, fn))

    def backward(self, loss: Tensor, accumulate: bool = True) -> dict[Tensor, np.ndarray]:
        return backward(self, loss, accumulate=accumulate)

    def first_nonfinite(self) -> OpRecord | None:
        for rec in self.records:
            if not np.isfinite(rec.output.data).all():
                return rec
        return None


def backward(tape: GradTape, loss: Tensor, accumulate: bool = True) -> dict[Tensor, np.ndarray]:
    """Propagate d(loss)/d(.) through ``tape``; return gradients of all leaves.

    Leaves are tensors with ``requires_grad`` that were not produced by a
    record on this tape. When ``accumulate`` is set, each leaf's ``.grad``
    is incremented as well.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = set()
    for rec in reversed(tape.records):
        produced.add(id(rec.output))
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.backward(g)
        for t, gi in zip(rec.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(f"{rec.op}: gradient shape {gi.shape} != input shape {t.shape}")
            key = id(t)
            prev = grads.get(key)
            grads[key] = gi.copy() if prev is None else prev + gi
    leaves: dict[Tensor, np.ndarray] = {}
    seen = set()
    for rec in tape.records:
        for t in rec.inputs:
            k = id(t)
            if k in seen or k in produced or not t.requires_grad:
                continue
            seen.add(k)
            g = grads.get(k, np.zeros_like(t.data))
            leaves[t] = g
            if accumulate:
                t.grad = g.copy() if t.grad is None else t.grad + g
    return leaves


def _emit(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"operation '{op}' produced non-finite values")
    out = Tensor(data)
    tape = _current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, fn)
    return out


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def _broadcast_shape(a: tuple, b: tuple, op: str) -> tuple:
    if a == b or len(b) == 0:
        return a
    if len(a) == 0:
        return b
    if len(a) != len(b):
        raise ShapeError(f"{op}: cannot broadcast {a} with {b} (rank differs)")
    out = []
    for x, y in zip(a, b):
        if x != y and x != 1 and y != 1:
            raise ShapeError(f"{op}: cannot broadcast {a} with {b}")
        out.append(max(x, y))
    out = tuple(out)
    if out != a and out != b:
        raise ShapeError(f"{op}: broadcast of {a} with {b} must match one operand's shape")
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum())
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _emit("div", out, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)))


def elementwise(a, b, kind: str) -> Tensor:
    """``kind`` is ``"add"`` or ``"mul"``."""
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def neg(a: Tensor) -> Tensor:
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return _emit("pow", ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(ad)
    return _emit("log", out, (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _emit("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign for stability
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _emit("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a: Tensor) -> Tensor:
    x = a.data
    s = _sigmoid(x)
    return _emit("silu", x * s, (a,), lambda g: (g * s * (1.0 + x * (1.0 - s)),))


def log_sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(x)
    return _emit("log_sigmoid", out, (a,), lambda g: (g * (1.0 - s),))


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "maximum")
    take_a = a.data >= b.data
    sa, sb = a.shape, b.shape
    return _emit("maximum", np.maximum(a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * take_a, sa), _unbroadcast(g * ~take_a, sb)))


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "minimum")
    take_a = a.data <= b.data
    sa, sb = a.shape, b.shape
    return _emit("minimum", np.minimum(a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * take_a, sa), _unbroadcast(g * ~take_a, sb)))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _emit("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# Reductions and shape manipulation
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    shape = a.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axes, keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {src} as {tuple(shape)}") from exc
    return _emit("reshape", out, (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _emit("getitem", np.array(a.data[index]), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} along axis {ax}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    return _emit("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors,
                 lambda g: tuple(np.split(g, bounds, axis=ax)))


def split(a: Tensor, sizes: Sequence[int], axis: int = 1) -> list[Tensor]:
    ax = axis % a.ndim
    if sum(sizes) != a.shape[ax] or any(s < 0 for s in sizes):
        raise ShapeError(f"split: sizes {list(sizes)} do not sum to extent {a.shape[ax]}")
    out, start = [], 0
    for s in sizes:
        idx = [slice(None)] * a.ndim
        idx[ax] = slice(start, start + s)
        out.append(getitem(a, tuple(idx)))
        start += s
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis)


# ---------------------------------------------------------------------------
# Linear algebra, softmax
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return (_sum_to(ga, ad.shape), _sum_to(gb, bd.shape))

    return _emit("matmul", ad @ bd, (a, b), bw)


def _sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    return _unbroadcast(g, shape)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True)
    return _emit("softmax", s, (a,),
                 lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))
