"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import GradTape, Tensor


@dataclass
class GradCheckReport:
    """Per-tensor and overall relative errors between analytic and numeric gradients."""

    max_rel_error: float
    per_tensor: list[float]
    errors: list[np.ndarray] = field(repr=False)
    n_checked: int
    threshold: float
    names: list[str] = field(default_factory=list)
    analytic_nonzero: list[bool] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.threshold

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"max relative error {self.max_rel_error:.3e} over {self.n_checked} coordinates "
                f"(threshold {self.threshold:.0e}) {status}")


def _as_list(x) -> list[Tensor]:
    if isinstance(x, Tensor):
        return [x]
    return list(x)


def finite_diff_check(
    f: Callable[..., Tensor],
    x: Tensor | Sequence[Tensor],
    h: float = 1e-5,
    threshold: float = 1e-4,
    floor: float = 1e-5,
    max_checks: int | None = None,
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``f(*x)`` against central differences.

    A non-scalar output is reduced with a fixed random projection so every
    output element contributes. The step for coordinate ``i`` is
    ``h * max(1, |x_i|)``. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps structurally zero
    gradients from dividing roundoff by zero.

    When a tensor has more than ``max_checks`` coordinates a seeded random
    subset is checked. Never raises on large error; inspect the report.
    """
    tensors = _as_list(x)
    rng = np.random.default_rng(seed)
    flags = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = True
        if not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data)

    proj: list[np.ndarray] = []

    def scalar(out: Tensor) -> Tensor:
        if out.size == 1:
            return out.reshape(())
        if not proj:
            proj.append(np.random.default_rng(seed + 1).standard_normal(out.shape))
        return (out * Tensor(proj[0])).sum()

    def value() -> float:
        return float(scalar(f(*tensors)).data)

    try:
        with GradTape() as tape:
            loss = scalar(f(*tensors))
        grads = tape.backward(loss, accumulate=False)
        analytic = [grads.get(t, np.zeros_like(t.data)) for t in tensors]

        errors, per_tensor, nonzero = [], [], []
        n_checked = 0
        for t, ga in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_checks is not None and flat.size > max_checks:
                idx = np.sort(rng.choice(flat.size, size=max_checks, replace=False))
            errs = np.empty(idx.size)
            gflat = ga.reshape(-1)
            for k, i in enumerate(idx):
                orig = flat[i]
                step = h * max(1.0, abs(orig))
                flat[i] = orig + step
                fp = value()
                flat[i] = orig - step
                fm = value()
                flat[i] = orig
                num = (fp - fm) / (2.0 * step)
                a = gflat[i]
                errs[k] = abs(a - num) / max(abs(a), abs(num), floor)
            errors.append(errs)
            per_tensor.append(float(errs.max()) if errs.size else 0.0)
            nonzero.append(bool(np.any(ga != 0)))
            n_checked += idx.size
    finally:
        for t, fl in zip(tensors, flags):
            t.requires_grad = fl

    return GradCheckReport(
        max_rel_error=max(per_tensor) if per_tensor else 0.0,
        per_tensor=per_tensor,
        errors=errors,
        n_checked=n_checked,
        threshold=threshold,
        names=list(names) if names else [t.name or f"x{i}" for i, t in enumerate(tensors)],
        analytic_nonzero=nonzero,
    )
