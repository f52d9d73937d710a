"""Minimal reverse-mode autodiff with the layers the PhASER network needs."""

from .functional import conv2d, cross_entropy, silu, softmax, standardize
from .gradcheck import GradReport, grad_check, grad_check_chain, relative_error
from .layers import (
    BatchNorm2d,
    Conv2d,
    Dense,
    LayerSpec,
    MeanPool,
    Module,
    Sequential,
    SiLU,
    SubSpectralNorm,
    build_layer,
    layer_forward,
)
from .serialize import load_module, read_tensors, save_module, write_tensors
from .tensor import Tensor, as_tensor, concat, no_grad_enabled

__all__ = [
    "Tensor", "as_tensor", "concat", "no_grad_enabled",
    "conv2d", "cross_entropy", "silu", "softmax", "standardize",
    "Module", "Conv2d", "BatchNorm2d", "SubSpectralNorm", "SiLU", "MeanPool", "Dense", "Sequential",
    "LayerSpec", "build_layer", "layer_forward",
    "GradReport", "grad_check", "grad_check_chain", "relative_error",
    "write_tensors", "read_tensors", "save_module", "load_module",
]
