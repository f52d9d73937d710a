"""PhASER network: separate magnitude/phase encoders, sub-spectral normalization,
fusion, depthwise + temporal encoders and phase-residual broadcasting.

Shapes for one batch (N samples, V variates, D = nfft/2 + 1 bins, F frames)::

    mag, pha                (N, V, D, F)
    e_m, e_p                (N, 2c, D, F)   encoder + sub-spectral norm
    r_fus                   (N, 2c, D, F)   1x1 fusion of [e_m, e_p]
    r_dep                   (N, 2c, 1, F)   conv blocks, mean over D
    r                       (N, 2c, D, F)   F_Tem(r_dep) broadcast + g_Res(e_p)
    logits                  (N, K)          1x1 class conv, mean over (D, F)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import functional as F
from .autodiff.layers import BatchNorm2d, Conv2d, Module, Sequential, SiLU, SubSpectralNorm
from .autodiff.tensor import Tensor, as_tensor, concat
from .signal import mag_phase, stft

__all__ = [
    "PhaserConfig",
    "PhaserModel",
    "FeatureMaps",
    "build_model",
    "param_count",
    "expected_param_count",
    "subspectral_normalize",
    "spectral_features",
    "forward",
]

ENCODINGS = ("separate", "mag_only", "concat")


@dataclass(frozen=True)
class PhaserConfig:
    V: int
    num_classes: int
    c: int = 1
    B: int = 3
    nfft: int = 1024
    seg_len: int = 4
    eps_norm: float = 1e-5
    seed: int = 2711
    use_residual: bool = True
    encoding: str = "separate"
    # "normalized": g_Res reads e_p; "raw": g_Res reads F_Pha output before normalization
    residual_source: str = "normalized"
    random_windows: bool = False

    def __post_init__(self):
        if self.V < 1:
            raise ValueError("V must be >= 1")
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.nfft < 2 or self.nfft & (self.nfft - 1):
            raise ValueError("nfft must be a power of 2")
        if not 2 <= self.seg_len <= self.nfft:
            raise ValueError("seg_len must lie in [2, nfft]")
        if not self.eps_norm > 0:
            raise ValueError("eps_norm must be positive")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}")
        if self.residual_source not in ("normalized", "raw"):
            raise ValueError("residual_source must be 'normalized' or 'raw'")
        if self.B > self.n_bins:
            raise ValueError("B exceeds the number of frequency bins")

    @property
    def n_bins(self) -> int:
        return self.nfft // 2 + 1

    @property
    def width(self) -> int:
        return 2 * self.c

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PhaserConfig":
        doc = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown PhaserConfig fields: {sorted(unknown)}")
        return cls(**doc)

    def window_lengths(self, t_len: int) -> list[int]:
        """Per-variate STFT window lengths (fixed, or seeded powers of two)."""
        if not self.random_windows:
            return [self.seg_len] * self.V
        cap = min(self.nfft, t_len)
        max_p = int(np.floor(np.log2(cap)))
        rng = np.random.default_rng([self.seed, 0x57])
        return [int(2 ** rng.integers(1, max_p + 1)) for _ in range(self.V)]


@dataclass
class FeatureMaps:
    e_m: np.ndarray
    e_p: np.ndarray
    r_fus: np.ndarray
    r_dep: np.ndarray
    r: np.ndarray


def spectral_features(x: np.ndarray, cfg: PhaserConfig, phase_sign: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Batch STFT magnitude and phase, each (N, V, D, F) float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != cfg.V:
        raise ValueError(f"expected (N, {cfg.V}, T) input, got {x.shape}")
    wl = cfg.window_lengths(x.shape[2])
    mags, phas = [], []
    for sample in x:
        mp = mag_phase(stft(sample, cfg.seg_len, cfg.nfft, phase_sign=phase_sign, window_lengths=wl))
        mags.append(mp.mag)
        phas.append(mp.pha)
    if not mags:
        n_bins, n_frames = cfg.n_bins, x.shape[2] // cfg.seg_len
        empty = np.zeros((0, cfg.V, n_bins, n_frames))
        return empty, empty.copy()
    return np.stack(mags), np.stack(phas)


class PhaserModel(Module):
    def __init__(self, cfg: PhaserConfig, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(cfg.seed)
        w, d = cfg.width, cfg.n_bins

        def conv(i, o, kh, kw, bias=True):
            return Conv2d(i, o, kh, kw, kh // 2, kw // 2, bias=bias, rng=rng, dtype=dtype)

        # convs feeding a normalization layer carry no bias (it would be cancelled exactly)
        if cfg.encoding == "concat":
            self.f_enc = self.add_child("f_enc", conv(2 * cfg.V, w, 5, 5, bias=False))
            self.ssn_enc = self.add_child("ssn_enc", SubSpectralNorm(w, d, cfg.B, cfg.eps_norm, dtype=dtype))
        else:
            self.f_mag = self.add_child("f_mag", conv(cfg.V, w, 5, 5, bias=False))
            self.ssn_mag = self.add_child("ssn_mag", SubSpectralNorm(w, d, cfg.B, cfg.eps_norm, dtype=dtype))
        if cfg.encoding == "separate":
            self.f_pha = self.add_child("f_pha", conv(cfg.V, w, 5, 5, bias=False))
            self.ssn_pha = self.add_child("ssn_pha", SubSpectralNorm(w, d, cfg.B, cfg.eps_norm, dtype=dtype))
            self.f_fus = self.add_child("f_fus", conv(2 * w, w, 1, 1))
        self.f_dep = self.add_child(
            "f_dep",
            Sequential(
                conv(w, w, 3, 3, bias=False), BatchNorm2d(w, cfg.eps_norm, dtype=dtype), SiLU(),
                conv(w, w, 3, 3, bias=False), BatchNorm2d(w, cfg.eps_norm, dtype=dtype), SiLU(),
            ),
        )
        self.f_tem = self.add_child("f_tem", conv(w, w, 1, 3))
        if self.has_residual:
            self.g_res = self.add_child("g_res", conv(w, w, 1, 1))
        self.g_cls = self.add_child("g_cls", conv(w, cfg.num_classes, 1, 1))
        self.frozen: set[str] = set()

    @property
    def has_residual(self) -> bool:
        return self.cfg.use_residual and self.cfg.encoding == "separate"

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_parameters().items() if k not in self.frozen}

    def zero_residual(self, freeze: bool = True) -> None:
        """Zero g_Res weights and bias (optionally excluding them from training)."""
        if not self.has_residual:
            return
        for name, p in self.g_res.named_parameters("g_res.").items():
            p.data = np.zeros_like(p.data)
            if freeze:
                self.frozen.add(name)

    def forward(self, inputs, return_maps: bool = False):
        mag, pha = inputs
        cfg = self.cfg
        mag = as_tensor(np.asarray(mag.data if isinstance(mag, Tensor) else mag, dtype=self.dtype))
        pha = as_tensor(np.asarray(pha.data if isinstance(pha, Tensor) else pha, dtype=self.dtype))
        if mag.shape != pha.shape or mag.ndim != 4:
            raise ValueError(f"mag/pha must share an N x V x D x F shape, got {mag.shape} and {pha.shape}")
        if mag.shape[1] != cfg.V or mag.shape[2] != cfg.n_bins:
            raise ValueError(f"expected N x {cfg.V} x {cfg.n_bins} x F input, got {mag.shape}")

        e_p = None
        raw_p = None
        if cfg.encoding == "concat":
            e_m = self.ssn_enc(self.f_enc(concat([mag, pha], axis=1)))
            r_fus = e_m
        else:
            e_m = self.ssn_mag(self.f_mag(mag))
            if cfg.encoding == "separate":
                raw_p = self.f_pha(pha)
                e_p = self.ssn_pha(raw_p)
                r_fus = self.f_fus(concat([e_m, e_p], axis=1))
            else:
                r_fus = e_m
        r_dep = self.f_dep(r_fus).mean(axis=2, keepdims=True)
        tem = self.f_tem(r_dep)
        if self.has_residual:
            res = F.silu(self.g_res(e_p if cfg.residual_source == "normalized" else raw_p))
            if tem.shape[2] != 1 or res.shape[:2] != tem.shape[:2] or res.shape[3] != tem.shape[3]:
                raise AssertionError(f"broadcast shape law violated: {tem.shape} vs {res.shape}")
            r = tem + res
        else:
            # broadcast over the feature axis by adding exact zeros, so pooling sees the same map
            r = tem + Tensor(np.zeros((1, 1, mag.shape[2], 1), dtype=self.dtype))
        logits = self.g_cls(r).mean(axis=(2, 3))
        if return_maps:
            maps = FeatureMaps(
                e_m.data, None if e_p is None else e_p.data, r_fus.data, r_dep.data, r.data
            )
            return logits, maps
        return logits

    def __call__(self, inputs, return_maps: bool = False):
        return self.forward(inputs, return_maps)


def build_model(cfg: PhaserConfig, dtype=np.float32) -> PhaserModel:
    return PhaserModel(cfg, dtype)


def forward(model: PhaserModel, mag, pha, mode: str = "train") -> Tensor:
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    model.train(mode == "train")
    return model((mag, pha))


def param_count(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))


def expected_param_count(cfg: PhaserConfig) -> int:
    """Closed-form parameter count, layer by layer."""
    w, v, k = cfg.width, cfg.V, cfg.num_classes

    def conv(i, o, kh, kw, bias=True):
        return o * i * kh * kw + (o if bias else 0)

    def ssn(ch):
        rem = cfg.n_bins % cfg.B
        return 2 * ch * cfg.B + (2 * ch if rem else 0)

    total = 0
    if cfg.encoding == "concat":
        total += conv(2 * v, w, 5, 5, False) + ssn(w)
    else:
        total += conv(v, w, 5, 5, False) + ssn(w)
    if cfg.encoding == "separate":
        total += conv(v, w, 5, 5, False) + ssn(w) + conv(2 * w, w, 1, 1)
    total += 2 * (conv(w, w, 3, 3, False) + 2 * w)
    total += conv(w, w, 1, 3)
    if cfg.use_residual and cfg.encoding == "separate":
        total += conv(w, w, 1, 1)
    total += conv(w, k, 1, 1)
    return total


def subspectral_normalize(f, B: int, eps: float = 1e-5, mode: str = "train", norm: SubSpectralNorm | None = None, affine: bool = True):
    """Band-wise normalization of an N x C x D x T map.

    Pass ``norm`` to reuse running statistics; otherwise a fresh layer is
    built (so ``mode="eval"`` then fails for lack of statistics).
    """
    f = as_tensor(f)
    if f.ndim != 4:
        raise ValueError("subspectral_normalize expects an N x C x D x T tensor")
    if norm is None:
        norm = SubSpectralNorm(f.shape[1], f.shape[2], B, eps, dtype=f.dtype)
    norm.train(mode == "train")
    return norm(f, affine=affine)
