"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .functional import cross_entropy
from .tensor import Tensor

__all__ = ["GradReport", "relative_error", "grad_check", "grad_check_chain"]


@dataclass
class GradReport:
    errors: dict[str, float] = field(default_factory=dict)
    threshold: float = 1e-4
    n_checked: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def grad_check(
    loss_fn: Callable[[], Tensor],
    tensors: dict[str, Tensor],
    h: float = 1e-5,
    *,
    max_entries: int | None = None,
    threshold: float = 1e-4,
    seed: int = 0,
) -> GradReport:
    """Compare backprop gradients of ``loss_fn()`` against central differences.

    ``tensors`` are perturbed in place (and restored).  With ``max_entries``
    set, a seeded subsample of at least that many entries is checked across
    all tensors; otherwise every entry is.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    for t in tensors.values():
        if t.dtype != np.float64:
            raise TypeError("grad_check needs float64 tensors")
        t.grad = None
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise ArithmeticError("loss is not finite")
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}

    entries = [(k, i) for k, t in tensors.items() for i in range(t.size)]
    if max_entries is not None and len(entries) > max_entries:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(entries), size=max_entries, replace=False))
        entries = [entries[i] for i in pick]

    report = GradReport(threshold=threshold, n_checked=len(entries))
    for name, i in entries:
        flat = tensors[name].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn().data)
        flat[i] = orig - h
        down = float(loss_fn().data)
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ArithmeticError(f"loss not finite while perturbing {name}[{i}]")
        numeric = (up - down) / (2 * h)
        err = float(relative_error(analytic[name].reshape(-1)[i], numeric))
        report.errors[name] = max(report.errors.get(name, 0.0), err)
    return report


def grad_check_chain(layers, x, labels=None, h: float = 1e-5, *, include_input: bool | None = None, **kw) -> GradReport:
    """Gradient-check a layer chain in train mode.

    The loss is cross-entropy on the chain output (flattened to N x K) when
    ``labels`` is given, else ``0.5 * sum(out**2)``.  Input gradients are
    checked when the chain has no parameters or ``include_input`` is set.
    """
    xt = Tensor(np.array(x, dtype=np.float64), requires_grad=True)

    def loss_fn():
        out = xt
        for layer in layers:
            layer.train(True)
            out = layer(out)
        if labels is not None:
            return cross_entropy(out.reshape(out.shape[0], -1), labels)
        return (out * out).sum() * 0.5

    tensors = {}
    for li, layer in enumerate(layers):
        for name, p in layer.named_parameters().items():
            tensors[f"{li}.{name}"] = p
    if include_input or (include_input is None and not tensors):
        tensors["input"] = xt
    return grad_check(loss_fn, tensors, h, **kw)
