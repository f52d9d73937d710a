"""Layers built on the autodiff kernels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .tensor import Tensor, as_tensor, concat

__all__ = [
    "Module",
    "Conv2d",
    "BatchNorm2d",
    "SubSpectralNorm",
    "SiLU",
    "MeanPool",
    "Dense",
    "Sequential",
    "LayerSpec",
    "build_layer",
    "layer_forward",
]


class Module:
    """Base class: holds named parameters, buffers and child modules."""

    training: bool = True

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_child(self, name: str, mod: "Module") -> "Module":
        self._children[name] = mod
        return mod

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {prefix + k: v for k, v in self._params.items()}
        for cname, child in self._children.items():
            out.update(child.named_parameters(f"{prefix}{cname}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + k: v for k, v in self._buffers.items()}
        for cname, child in self._children.items():
            out.update(child.named_buffers(f"{prefix}{cname}."))
        return out

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        head, _, rest = name.partition(".")
        if rest:
            self._children[head].set_buffer(rest, value)
        else:
            if name not in self._buffers:
                raise KeyError(name)
            self._buffers[name] = np.asarray(value, dtype=self._buffers[name].dtype).reshape(self._buffers[name].shape)

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, x, **kw):
        return self.forward(x, **kw)

    def forward(self, x):
        raise NotImplementedError


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kh, kw, pad_h=None, pad_w=None, *, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        if min(in_ch, out_ch, kh, kw) < 1:
            raise ValueError("conv2d dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_ch, self.out_ch, self.kh, self.kw = in_ch, out_ch, kh, kw
        self.padding = (kh // 2 if pad_h is None else pad_h, kw // 2 if pad_w is None else pad_w)
        self.weight = self.add_param("weight", _fan_in_uniform(rng, (out_ch, in_ch, kh, kw), in_ch * kh * kw, dtype))
        # a bias feeding straight into batch statistics is cancelled exactly; such layers omit it
        self.bias = self.add_param("bias", np.zeros(out_ch, dtype=dtype)) if bias else None

    def forward(self, x):
        return F.conv2d(as_tensor(x), self.weight, self.bias, self.padding)


class Dense(Module):
    def __init__(self, n_in, n_out, *, rng=None, dtype=np.float32):
        super().__init__()
        if min(n_in, n_out) < 1:
            raise ValueError("dense dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = self.add_param("weight", _fan_in_uniform(rng, (n_in, n_out), n_in, dtype))
        self.bias = self.add_param("bias", np.zeros(n_out, dtype=dtype))

    def forward(self, x):
        x = as_tensor(x)
        if x.ndim != 2:
            x = x.reshape(x.shape[0], -1)
        if x.shape[1] != self.weight.shape[0]:
            raise ValueError(f"dense expects {self.weight.shape[0]} features, got {x.shape[1]}")
        return x @ self.weight + self.bias


class SiLU(Module):
    def forward(self, x):
        return F.silu(as_tensor(x))


class MeanPool(Module):
    """Mean over one axis, kept as a singleton."""

    def __init__(self, axis):
        super().__init__()
        self.axis = axis

    def forward(self, x):
        return as_tensor(x).mean(axis=self.axis, keepdims=True)


class _Norm(Module):
    """Shared train/eval logic for batch-statistics normalization groups."""

    def __init__(self, eps, momentum):
        super().__init__()
        if not eps > 0:
            raise ValueError("eps must be positive")
        if not 0 <= momentum <= 1:
            raise ValueError("momentum must lie in [0, 1]")
        self.eps, self.momentum = eps, momentum

    def _group(self, x: Tensor, axes, key: str) -> Tensor:
        mean_key, var_key, count_key = f"{key}running_mean", f"{key}running_var", f"{key}num_batches"
        if self.training:
            y, mean, var = F.standardize(x, axes, self.eps)
            m = self.momentum
            self._buffers[mean_key] = ((1 - m) * self._buffers[mean_key] + m * mean).astype(np.float64)
            self._buffers[var_key] = ((1 - m) * self._buffers[var_key] + m * var).astype(np.float64)
            self._buffers[count_key] = self._buffers[count_key] + 1
            return y
        if self._buffers[count_key].item() == 0:
            raise RuntimeError("eval-mode normalization before any running statistics exist")
        mean = self._buffers[mean_key].astype(x.dtype)
        inv = (1.0 / np.sqrt(self._buffers[var_key] + self.eps)).astype(x.dtype)
        return (x - mean) * inv

    def _init_stats(self, key: str, shape) -> None:
        self._buffers[f"{key}running_mean"] = np.zeros(shape)
        self._buffers[f"{key}running_var"] = np.ones(shape)
        self._buffers[f"{key}num_batches"] = np.zeros((), dtype=np.int64)


class BatchNorm2d(_Norm):
    def __init__(self, ch, eps=1e-5, momentum=0.1, *, dtype=np.float32):
        super().__init__(eps, momentum)
        if ch < 1:
            raise ValueError("batchnorm needs ch >= 1")
        self.ch = ch
        self.gamma = self.add_param("gamma", np.ones((1, ch, 1, 1), dtype=dtype))
        self.beta = self.add_param("beta", np.zeros((1, ch, 1, 1), dtype=dtype))
        self._init_stats("", (1, ch, 1, 1))

    def forward(self, x):
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.ch:
            raise ValueError(f"batchnorm2d expects N x {self.ch} x H x W, got {x.shape}")
        return self._group(x, (0, 2, 3), "") * self.gamma + self.beta


class SubSpectralNorm(_Norm):
    """Band-wise batch normalization along the feature (frequency) axis.

    The D bins are split into ``groups`` contiguous bands of ``D // groups``
    bins, each standardized per channel over (batch, band bins, time).  Any
    ``D % groups`` trailing bins form one extra plain batch-norm group.  Each
    band has its own affine scale and shift.
    """

    def __init__(self, ch, n_bins, groups=3, eps=1e-5, momentum=0.1, *, dtype=np.float32):
        super().__init__(eps, momentum)
        if groups < 1:
            raise ValueError("groups must be >= 1")
        if n_bins < groups:
            raise ValueError(f"feature axis ({n_bins}) shorter than the number of groups ({groups})")
        self.ch, self.n_bins, self.groups = ch, n_bins, groups
        self.band = n_bins // groups
        self.remainder = n_bins - self.band * groups
        self.gamma = self.add_param("gamma", np.ones((1, ch, groups, 1, 1), dtype=dtype))
        self.beta = self.add_param("beta", np.zeros((1, ch, groups, 1, 1), dtype=dtype))
        self._init_stats("band_", (1, ch, groups, 1, 1))
        if self.remainder:
            self.rem_gamma = self.add_param("rem_gamma", np.ones((1, ch, 1, 1), dtype=dtype))
            self.rem_beta = self.add_param("rem_beta", np.zeros((1, ch, 1, 1), dtype=dtype))
            self._init_stats("rem_", (1, ch, 1, 1))

    def forward(self, x, affine: bool = True):
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.ch or x.shape[2] != self.n_bins:
            raise ValueError(f"subspectral norm expects N x {self.ch} x {self.n_bins} x T, got {x.shape}")
        n, c, _, t = x.shape
        main_len = self.band * self.groups
        main = x[:, :, :main_len, :] if self.remainder else x
        main = main.reshape(n, c, self.groups, self.band, t)
        y = self._group(main, (0, 3, 4), "band_")
        if affine:
            y = y * self.gamma + self.beta
        y = y.reshape(n, c, main_len, t)
        if not self.remainder:
            return y
        r = self._group(x[:, :, main_len:, :], (0, 2, 3), "rem_")
        if affine:
            r = r * self.rem_gamma + self.rem_beta
        return concat([y, r], axis=2)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            self.add_child(str(i), layer)

    @property
    def layers(self) -> list[Module]:
        return list(self._children.values())

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


_KINDS = ("conv2d", "batchnorm2d", "silu", "mean_pool_over_dim", "dense", "softmax_ce")


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description, e.g. ``LayerSpec("conv2d", {"in_ch": 3, ...})``."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


class _SoftmaxCE(Module):
    """Terminal loss layer; ``forward`` takes (logits, labels)."""

    def forward(self, inputs):
        logits, labels = inputs
        return F.cross_entropy(logits, labels)


def build_layer(spec: LayerSpec, dtype=np.float32) -> Module:
    p = dict(spec.params)
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "conv2d":
        return Conv2d(p["in_ch"], p["out_ch"], p["kh"], p["kw"], p.get("pad_h"), p.get("pad_w"), bias=p.get("bias", True), rng=rng, dtype=dtype)
    if spec.kind == "batchnorm2d":
        return BatchNorm2d(p["ch"], p.get("eps", 1e-5), p.get("momentum", 0.1), dtype=dtype)
    if spec.kind == "silu":
        return SiLU()
    if spec.kind == "mean_pool_over_dim":
        return MeanPool(p["axis"])
    if spec.kind == "dense":
        return Dense(p["in"], p["out"], rng=rng, dtype=dtype)
    return _SoftmaxCE()


def layer_forward(layer, x, mode: str = "train"):
    """Run one layer (or a LayerSpec, built on the fly) in ``train`` or ``eval`` mode."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    if isinstance(layer, LayerSpec):
        dtype = np.asarray(x.data if isinstance(x, Tensor) else x).dtype
        layer = build_layer(layer, dtype=dtype if np.issubdtype(dtype, np.floating) else np.float64)
    layer.train(mode == "train")
    return layer(x)
