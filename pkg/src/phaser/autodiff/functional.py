"""Fused differentiable kernels: conv2d, SiLU, batch standardization, softmax cross-entropy."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor

__all__ = ["conv2d", "silu", "sigmoid", "standardize", "cross_entropy", "softmax", "log_softmax"]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def silu(x: Tensor) -> Tensor:
    s = sigmoid(x.data)
    xd = x.data
    return Tensor._make(xd * s, (x,), lambda g: (g * s * (1.0 + xd * (1.0 - s)),))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding: tuple[int, int] = (0, 0)) -> Tensor:
    """Stride-1 cross-correlation of (N, C, H, W) input with (O, C, kh, kw) kernels."""
    if x.ndim != 4:
        raise ValueError(f"conv2d expects N x C x H x W input, got shape {x.shape}")
    n, c, h, w = x.shape
    o, c_w, kh, kw = weight.shape
    if c != c_w:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {c_w}")
    ph, pw = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    ho, wo = xp.shape[2] - kh + 1, xp.shape[3] - kw + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {xp.shape[2:]}")
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N, C, Ho, Wo, kh, kw
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(o, -1)
    # fixed-order accumulation over the kernel axis instead of a BLAS/SIMD reduction:
    # every output element is summed identically whatever the batch size or alignment,
    # so per-sample results never depend on batch composition
    out = np.zeros((cols.shape[0], o), dtype=np.result_type(cols, wmat))
    for k in range(cols.shape[1]):
        out += cols[:, k : k + 1] * wmat[:, k]
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        dw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        db = g2.sum(axis=0, dtype=np.float64).astype(g.dtype) if bias is not None and bias.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, kh, kw)
            dxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + ho, j : j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            dx = dxp[:, :, ph : ph + h, pw : pw + w]
        return (dx, dw, db) if bias is not None else (dx, dw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor._make(np.ascontiguousarray(out), parents, back)


def standardize(x: Tensor, axes: tuple[int, ...], eps: float) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """``(x - mean) / sqrt(var + eps)`` with batch statistics over ``axes``.

    Returns the output plus the (biased) mean and variance used, in float64.
    """
    xd = x.data.astype(np.float64)
    mean = xd.mean(axis=axes, keepdims=True)
    centered = xd - mean
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = centered * inv
    dtype = x.dtype

    def back(g):
        g = g.astype(np.float64)
        gm = g.mean(axis=axes, keepdims=True)
        gym = (g * y).mean(axis=axes, keepdims=True)
        return ((inv * (g - gm - y * gym)).astype(dtype),)

    return Tensor._make(y.astype(dtype), (x,), back), mean, var


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2:
        raise ValueError(f"logits must be N x K, got shape {logits.shape}")
    n, k = logits.shape
    if n == 0:
        raise ValueError("cross_entropy on an empty batch")
    if k < 2:
        raise ValueError("cross_entropy needs K >= 2 classes")
    if len(labels) != n or labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels must be N class ids in [0, K)")
    logp = log_softmax(logits.data.astype(np.float64))
    loss = -logp[np.arange(n), labels].mean()
    dtype = logits.dtype

    def back(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1.0
        return ((d * (float(g) / n)).astype(dtype),)

    return Tensor._make(np.asarray(loss, dtype=dtype), (logits,), back)
