"""Dataset-level augmentations and source/augmented merging.

Every transform is per sample.  Random draws come from a generator spawned
for each sample index off one ``SeedSequence``, so results do not depend on
iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .signal import hilbert

__all__ = [
    "AugmentSpec",
    "KINDS",
    "hilbert_augment",
    "phase_combine",
    "random_phase_augment",
    "random_rotation",
    "rotate",
    "permute_windows",
    "circular_shift",
    "baseline_augment",
    "augment",
    "merge",
]

KINDS = ("hilbert_fixed", "hilbert_random_phase", "rotation", "permutation", "circular_shift")


@dataclass(frozen=True)
class AugmentSpec:
    kind: str
    phi_range: tuple[float, float] = (-np.pi / 2, np.pi / 2)
    window: int | None = None
    max_shift_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}; expected one of {KINDS}")
        lo, hi = self.phi_range
        if lo < -np.pi or hi > np.pi:
            raise ValueError("phi_range must lie within [-pi, pi]")
        if self.kind == "permutation" and (self.window is None or self.window < 1):
            raise ValueError("permutation needs a positive window")
        if self.kind == "circular_shift" and not 0 < self.max_shift_frac <= 1:
            raise ValueError("max_shift_frac must lie in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def _sample_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def hilbert_augment(ds: LabeledDataset) -> LabeledDataset:
    """Replace every variate of every sample with its Hilbert transform."""
    x = hilbert(ds.x.astype(np.float64)).astype(ds.x.dtype)
    return ds.with_x(x, name=f"{ds.name}+ht" if ds.name else "ht")


def phase_combine(x: np.ndarray, phi: float) -> np.ndarray:
    """``cos(phi) * x - sin(phi) * HT(x)`` along the last axis.

    For a tone ``cos(w t)`` this gives ``cos(w t + phi)``.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.cos(phi) * x - np.sin(phi) * hilbert(x)


def random_phase_augment(ds: LabeledDataset, spec: AugmentSpec) -> LabeledDataset:
    """Per sample, draw one phi from ``spec.phi_range`` and apply it to all variates."""
    if spec.kind != "hilbert_random_phase":
        raise ValueError(f"random_phase_augment needs kind 'hilbert_random_phase', got {spec.kind!r}")
    lo, hi = spec.phi_range
    if lo > hi:
        raise ValueError(f"empty phi_range {spec.phi_range}")
    rngs = _sample_rngs(spec.seed, len(ds))
    phis = np.array([r.uniform(lo, hi) if hi > lo else lo for r in rngs])
    x64 = ds.x.astype(np.float64)
    ht = hilbert(x64) if len(ds) else x64
    out = np.cos(phis)[:, None, None] * x64 - np.sin(phis)[:, None, None] * ht
    return ds.with_x(out.astype(ds.x.dtype), name=f"{ds.name}+rpht" if ds.name else "rpht")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from SO(3) via a unit quaternion."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    w, x, y, z = (
        a * np.sin(2 * np.pi * u2),
        a * np.cos(2 * np.pi * u2),
        b * np.sin(2 * np.pi * u3),
        b * np.cos(2 * np.pi * u3),
    )
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotate(x: np.ndarray, matrices: np.ndarray) -> np.ndarray:
    """Left-multiply each (3, T) sample by its 3x3 matrix."""
    return np.einsum("nij,njt->nit", np.asarray(matrices, dtype=np.float64), x.astype(np.float64))


def permute_windows(sample: np.ndarray, window: int, rng: np.random.Generator) -> np.ndarray:
    t_len = sample.shape[-1]
    n_win = t_len // window
    order = rng.permutation(n_win)
    blocks = sample.reshape(sample.shape[0], n_win, window)
    return blocks[:, order, :].reshape(sample.shape)


def circular_shift(sample: np.ndarray, shift: int) -> np.ndarray:
    return np.roll(sample, shift, axis=-1)


def baseline_augment(ds: LabeledDataset, spec: AugmentSpec) -> LabeledDataset:
    """Rotation, window permutation or circular shift."""
    rngs = _sample_rngs(spec.seed, len(ds))
    x = ds.x.astype(np.float64)
    if spec.kind == "rotation":
        if ds.n_variates != 3:
            raise ValueError(f"rotation needs V = 3 (axis triplets), got V = {ds.n_variates}")
        mats = np.stack([random_rotation(r) for r in rngs]) if len(ds) else np.zeros((0, 3, 3))
        out = rotate(x, mats)
    elif spec.kind == "permutation":
        if ds.length % spec.window:
            raise ValueError(f"window {spec.window} does not divide T = {ds.length}")
        out = np.stack([permute_windows(s, spec.window, r) for s, r in zip(x, rngs)]) if len(ds) else x
    elif spec.kind == "circular_shift":
        max_shift = int(np.floor(spec.max_shift_frac * ds.length))
        out = np.stack([circular_shift(s, int(r.integers(0, max_shift + 1))) for s, r in zip(x, rngs)]) if len(ds) else x
    else:
        raise ValueError(f"{spec.kind!r} is not a baseline augmentation")
    return ds.with_x(out.astype(ds.x.dtype), name=f"{ds.name}+{spec.kind}")


def augment(ds: LabeledDataset, spec: AugmentSpec) -> LabeledDataset:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "hilbert_fixed":
        return hilbert_augment(ds)
    if spec.kind == "hilbert_random_phase":
        return random_phase_augment(ds, spec)
    return baseline_augment(ds, spec)


def merge(original: LabeledDataset, augmented: LabeledDataset) -> LabeledDataset:
    """Concatenate two datasets; provenance is not recorded."""
    if original.x.shape[1:] != augmented.x.shape[1:]:
        raise ValueError(f"shape mismatch: {original.x.shape[1:]} vs {augmented.x.shape[1:]}")
    if original.num_classes != augmented.num_classes:
        raise ValueError(f"class-count mismatch: {original.num_classes} vs {augmented.num_classes}")
    if len(augmented) == 0:
        domains = original.domains
    elif len(original) == 0:
        domains = augmented.domains
    elif original.domains is None or augmented.domains is None:
        domains = None
    else:
        domains = np.concatenate([original.domains, augmented.domains])
    return LabeledDataset(
        np.concatenate([original.x, augmented.x.astype(original.x.dtype)]),
        np.concatenate([original.labels, augmented.labels]),
        original.num_classes,
        domains,
        original.sample_rate_hz,
        original.name,
    )
