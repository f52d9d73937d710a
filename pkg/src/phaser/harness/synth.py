"""Synthetic nonstationary domains.

Each sample is ``mu_d(t) + sigma_d(t) * z_t + A * cos(2 pi f_k t / T + phase)``
with white Gaussian ``z``.  The domain ``d`` sets the mean/std tracks and a
phase offset; the class ``k`` sets the tone frequency (``coding="frequency"``)
or, as a control, the tone phase (``coding="phase"``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..data import LabeledDataset
from ..divergence import GaussianTrack

__all__ = ["SynthSpec", "domain_tracks", "synth_generate"]


def _per_domain(value, n: int, what: str) -> list[float]:
    if np.isscalar(value):
        return [float(value)] * n
    vals = [float(v) for v in value]
    if len(vals) != n:
        raise ValueError(f"{what} needs {n} entries, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class SynthSpec:
    num_domains: int = 4
    num_classes: int = 3
    V: int = 3
    T: int = 128
    samples_per_class: int = 20
    sample_rate_hz: float = 20.0
    class_bins: tuple = ()
    tone_amplitude: float = 1.0
    coding: str = "frequency"
    # per-domain entries (scalars broadcast to every domain)
    mu_offset: float | tuple = 0.0
    mu_slope: float | tuple = 0.0
    sigma_base: float | tuple = 0.5
    sigma_growth: float | tuple = 0.0
    domain_phase: float | tuple = 0.0
    phase_jitter: float = 0.0
    variate_phase_step: float = 0.5
    seed: int = 2711

    def __post_init__(self):
        if min(self.num_domains, self.num_classes, self.V, self.samples_per_class) < 1:
            raise ValueError("counts must be positive")
        if self.T < 4 or self.T % 2:
            raise ValueError("T must be even and >= 4")
        if self.coding not in ("frequency", "phase"):
            raise ValueError("coding must be 'frequency' or 'phase'")
        bins = tuple(int(b) for b in self.class_bins) or self.default_bins()
        object.__setattr__(self, "class_bins", bins)
        if self.coding == "frequency":
            if len(bins) != self.num_classes:
                raise ValueError("class_bins needs one entry per class")
            if len(set(bins)) != len(bins):
                raise ValueError(f"frequency collision across classes: {bins}")
        if any(not 0 < b < self.T // 2 for b in bins):
            raise ValueError("class bins must lie strictly between DC and Nyquist")
        for name in ("mu_offset", "mu_slope", "sigma_base", "sigma_growth", "domain_phase"):
            vals = _per_domain(getattr(self, name), self.num_domains, name)
            object.__setattr__(self, name, tuple(vals))
        if any(s <= 0 for s in self.sigma_base):
            raise ValueError("sigma_base must be positive")
        if any(1 + g <= 0 for g in self.sigma_growth):
            raise ValueError("sigma_growth must keep sigma_t positive")

    def default_bins(self) -> tuple:
        if self.coding == "phase":
            return (self.T // 8,)
        step = max(1, (self.T // 2 - 2) // (self.num_classes + 1))
        return tuple(step * (k + 1) for k in range(self.num_classes))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown SynthSpec fields: {sorted(unknown)}")
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**doc)


def domain_tracks(spec: SynthSpec, d: int) -> GaussianTrack:
    """Noise-plus-trend (mu_t, sigma_t) tracks of domain ``d`` (tone excluded)."""
    t = np.arange(spec.T) / spec.T
    mu = spec.mu_offset[d] + spec.mu_slope[d] * t
    sigma = spec.sigma_base[d] * (1.0 + spec.sigma_growth[d] * t)
    return GaussianTrack(mu, sigma)


def synth_generate(spec: SynthSpec, domains=None) -> LabeledDataset:
    """Generate ``samples_per_class`` samples per (domain, class), domain-major.

    ``domains`` restricts generation to a subset of domain ids.  Each
    (domain, class, index) triple gets its own spawned generator, so a subset
    reproduces exactly the corresponding rows of the full dataset.
    """
    dom_ids = list(range(spec.num_domains)) if domains is None else [int(d) for d in domains]
    t = np.arange(spec.T)
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.num_domains * spec.num_classes * spec.samples_per_class)
    xs, ys, ds = [], [], []
    for d in dom_ids:
        if not 0 <= d < spec.num_domains:
            raise ValueError(f"domain {d} out of range")
        track = domain_tracks(spec, d)
        for k in range(spec.num_classes):
            for i in range(spec.samples_per_class):
                rng = np.random.default_rng(children[(d * spec.num_classes + k) * spec.samples_per_class + i])
                if spec.coding == "frequency":
                    freq, class_phase = spec.class_bins[k], 0.0
                else:
                    freq, class_phase = spec.class_bins[0], np.pi * k / spec.num_classes
                jitter = rng.uniform(-spec.phase_jitter, spec.phase_jitter) if spec.phase_jitter else 0.0
                phase = spec.domain_phase[d] + class_phase + jitter + spec.variate_phase_step * np.arange(spec.V)
                tone = spec.tone_amplitude * np.cos(2 * np.pi * freq * t[None, :] / spec.T + phase[:, None])
                noise = rng.standard_normal((spec.V, spec.T))
                xs.append(track.mu + track.sigma * noise + tone)
                ys.append(k)
                ds.append(d)
    x = np.stack(xs).astype(np.float32) if xs else np.zeros((0, spec.V, spec.T), dtype=np.float32)
    return LabeledDataset(x, ys, spec.num_classes, ds, spec.sample_rate_hz, "synth")
