"""Diagnostic experiments: augmentation discrepancy, semantic preservation,
variant ablations on held-out domains and the ensemble risk-bound trial."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..augment import hilbert_augment, merge
from ..autodiff import functional as F
from ..autodiff.layers import Dense
from ..autodiff.tensor import no_grad_enabled
from ..data import LabeledDataset
from ..divergence import BoundReport, Ensemble, bound_report, closest_mixture, epsilon_bound, expected_disagreement, expected_joint_error, gibbs_risk
from ..net import PhaserConfig, build_model
from ..signal import dft
from .synth import SynthSpec, domain_tracks, synth_generate
from .train import Adam, MetricsRow, TrainConfig, evaluate, train

__all__ = [
    "VARIANTS",
    "DEFAULT_SEEDS",
    "ScenarioSplit",
    "model_config",
    "run_experiment",
    "discrepancy_test",
    "semantic_preservation_test",
    "shifted_domain_spec",
    "SHIFTED_SPLIT",
    "spectral_linear_member",
    "risk_bound_trial",
]

VARIANTS = ("full", "no_aug", "no_residual", "mag_only", "concat")
DEFAULT_SEEDS = (2711, 2712, 2713)


@dataclass(frozen=True)
class ScenarioSplit:
    source_domains: tuple
    target_domains: tuple
    scenario: int = 0

    def __post_init__(self):
        src = tuple(sorted(int(d) for d in self.source_domains))
        tgt = tuple(sorted(int(d) for d in self.target_domains))
        if not src or not tgt:
            raise ValueError("source and target domain sets must both be nonempty")
        if set(src) & set(tgt):
            raise ValueError(f"source and target domains overlap: {sorted(set(src) & set(tgt))}")
        object.__setattr__(self, "source_domains", src)
        object.__setattr__(self, "target_domains", tgt)

    def check(self, ds: LabeledDataset) -> None:
        if ds.domains is None:
            raise ValueError("dataset carries no domain ids")
        present = set(np.unique(ds.domains).tolist())
        missing = set(self.source_domains + self.target_domains) - present
        if missing:
            raise ValueError(f"domains {sorted(missing)} not present in dataset")


def model_config(ds: LabeledDataset, variant: str = "full", seed: int = 2711, **overrides) -> PhaserConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    kw = dict(V=ds.n_variates, num_classes=ds.num_classes, seed=seed)
    if variant == "mag_only":
        kw["encoding"] = "mag_only"
    elif variant == "concat":
        kw["encoding"] = "concat"
    kw.update(overrides)
    return PhaserConfig(**kw)


def run_experiment(
    ds: LabeledDataset,
    split: ScenarioSplit,
    variant: str = "full",
    train_cfg: TrainConfig = TrainConfig(),
    seeds=DEFAULT_SEEDS,
    **model_overrides,
) -> list[MetricsRow]:
    """Train on the source domains and score the target domains, once per seed.

    Every variant except ``no_aug`` trains on sources merged with their
    Hilbert-augmented copy.  ``no_residual`` zeroes and freezes g_Res.
    Returns rows ``val`` then ``target`` per seed.
    """
    split.check(ds)
    src = ds.select_domains(split.source_domains)
    tgt = ds.select_domains(split.target_domains)
    train_set = src if variant == "no_aug" else merge(src, hilbert_augment(src))
    train_set = LabeledDataset(train_set.x, train_set.labels, train_set.num_classes, None, train_set.sample_rate_hz)
    rows = []
    for seed in seeds:
        cfg = model_config(ds, variant, seed, **model_overrides)
        model = build_model(cfg)
        if variant == "no_residual":
            model.zero_residual(freeze=True)
        res = train(model, train_set, dataclasses.replace(train_cfg, seed=seed))
        val = res.val_row
        val.scenario = split.scenario
        rows.append(val)
        rows.append(evaluate(model, tgt, "target", scenario=split.scenario, seed=seed))
    return rows


def _holdout(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, 0x7E57]).permutation(n)
    n_test = min(max(int(round(fraction * n)), 1), n - 1)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def discrepancy_test(
    ds: LabeledDataset,
    seed: int = 2711,
    *,
    train_cfg: TrainConfig | None = None,
    test_fraction: float = 0.3,
    augmented: LabeledDataset | None = None,
    **model_overrides,
) -> float:
    """Held-out accuracy of a K=2 PhASER telling ``S`` (label 0) from ``HT(S)`` (label 1).

    A sample and its transform always land in the same partition.
    ``augmented`` replaces ``HT(S)``, e.g. with an exact copy as a control.
    """
    aug = hilbert_augment(ds) if augmented is None else augmented
    if aug.x.shape != ds.x.shape:
        raise ValueError("augmented set must match the original shape")
    tr, te = _holdout(len(ds), test_fraction, seed)

    def pair(idx):
        x = np.concatenate([ds.x[idx], aug.x[idx].astype(ds.x.dtype)])
        y = np.r_[np.zeros(len(idx), np.int64), np.ones(len(idx), np.int64)]
        return LabeledDataset(x, y, 2, None, ds.sample_rate_hz)

    cfg = PhaserConfig(**{"V": ds.n_variates, "num_classes": 2, "seed": seed, **model_overrides})
    model = build_model(cfg)
    tc = dataclasses.replace(train_cfg or TrainConfig(max_epochs=30, batch_size=16), seed=seed)
    train(model, pair(tr), tc)
    return evaluate(model, pair(te), "test", seed=seed).accuracy


def semantic_preservation_test(
    ds: LabeledDataset,
    seed: int = 2711,
    *,
    train_cfg: TrainConfig | None = None,
    test_fraction: float = 0.3,
    transform=hilbert_augment,
    **model_overrides,
) -> tuple[float, float]:
    """Train on ``S`` only; return accuracy on held-out ``S`` and on ``transform(held-out S)``."""
    tr, te = _holdout(len(ds), test_fraction, seed)
    strip = lambda d: LabeledDataset(d.x, d.labels, d.num_classes, None, d.sample_rate_hz)  # noqa: E731
    cfg = PhaserConfig(**{"V": ds.n_variates, "num_classes": ds.num_classes, "seed": seed, **model_overrides})
    model = build_model(cfg)
    tc = dataclasses.replace(train_cfg or TrainConfig(max_epochs=80, batch_size=8, patience=20), seed=seed)
    train(model, strip(ds.subset(tr)), tc)
    held = strip(ds.subset(te))
    acc_s = evaluate(model, held, "test", seed=seed).accuracy
    acc_t = evaluate(model, strip(transform(held)), "test", seed=seed).accuracy
    return acc_s, acc_t


# -- shifted-domain benchmark ---------------------------------------------

SHIFTED_SPLIT = ScenarioSplit((0, 1, 2), (3,), scenario=1)


def shifted_domain_spec(seed: int = 5, samples_per_class: int = 20) -> SynthSpec:
    """Three source domains with mild trend/phase differences; the target's
    tones lag by a quarter period and its noise variance grows over time."""
    return SynthSpec(
        num_domains=4,
        num_classes=3,
        V=3,
        T=128,
        samples_per_class=samples_per_class,
        domain_phase=(0.0, 0.3, -0.3, -np.pi / 2),
        mu_slope=(0.0, 1.0, -1.0, 0.0),
        mu_offset=(0.0, 0.3, -0.3, 0.0),
        sigma_base=0.5,
        sigma_growth=(0.0, 0.0, 0.0, 0.5),
        phase_jitter=0.2,
        seed=seed,
    )


# -- risk-bound trial -----------------------------------------------------


def _log_spectrum(x: np.ndarray) -> np.ndarray:
    spec = dft(x.astype(np.float64).reshape(-1, x.shape[-1]))
    half = np.abs(spec[:, : x.shape[-1] // 2 + 1])
    return np.log1p(half).reshape(len(x), -1)


def spectral_linear_member(ds: LabeledDataset, seed: int, epochs: int = 60, lr: float = 1e-2):
    """Softmax regression on log-magnitude spectra, fit on a seeded bootstrap of ``ds``.

    Returns a callable mapping an (N, V, T) array to integer predictions.
    """
    rng = np.random.default_rng([seed, 0xB007])
    idx = rng.integers(0, len(ds), len(ds))
    feats = _log_spectrum(ds.x)
    mu, sd = feats.mean(0), feats.std(0) + 1e-8
    z, y = (feats[idx] - mu) / sd, ds.labels[idx]
    layer = Dense(z.shape[1], ds.num_classes, rng=rng, dtype=np.float64)
    opt = Adam(layer.named_parameters(), lr)
    for _ in range(epochs):
        opt.zero_grad()
        F.cross_entropy(layer(z), y).backward()
        opt.step()

    def predict(x: np.ndarray) -> np.ndarray:
        with no_grad_enabled():
            return layer((_log_spectrum(np.asarray(x)) - mu) / sd).data.argmax(axis=1)

    return predict


def risk_bound_trial(trial: int, q: float = 2.0, n_members: int = 5, samples_per_class: int = 30) -> BoundReport:
    """One seeded trial of the unseen-domain bound on two Gaussian-track sources.

    The target's tracks lie between the two sources.  ``d`` is measured on
    target samples, ``e`` on samples of the closest source mixture, ``epsilon``
    is the maximal textbook-form beta divergence between the source tracks and
    the reported risk is the ensemble's Gibbs risk on the target.
    """
    rng = np.random.default_rng([trial, 0xB0D])
    lam = rng.uniform(0.2, 0.8)
    off0, off1 = 0.0, rng.uniform(0.5, 1.5)
    sig0, sig1 = rng.uniform(0.95, 1.05), rng.uniform(1.05, 1.25)  # ratio < sqrt(2) keeps q=2 finite
    spec = SynthSpec(
        num_domains=3,
        num_classes=3,
        V=1,
        T=64,
        samples_per_class=samples_per_class,
        tone_amplitude=0.6,
        mu_offset=(off0, off1, (1 - lam) * off0 + lam * off1),
        sigma_base=(sig0, sig1, (1 - lam) * sig0 + lam * sig1),
        phase_jitter=np.pi,
        seed=int(rng.integers(2**31)),
    )
    ds = synth_generate(spec)
    src = ds.select_domains([0, 1])
    tgt = ds.select_domains([2])
    tracks = [domain_tracks(spec, d) for d in range(3)]
    eps, _ = epsilon_bound(tracks[:2], q, form="standard")
    mix = closest_mixture(tracks[2], tracks[:2], q)
    # samples from the closest mixture: pick each sample's source by the mixture weights
    fresh = synth_generate(dataclasses.replace(spec, seed=spec.seed + 1), domains=[0, 1])
    pick = np.random.default_rng([trial, 0x5A]).choice(2, size=len(fresh), p=mix.weights)
    mix_ds = fresh.subset(np.flatnonzero(fresh.domains == pick))
    ens = Ensemble([spectral_linear_member(src, seed=1000 * trial + m) for m in range(n_members)])
    d_hat = expected_disagreement(ens, tgt.x)
    e_hat = expected_joint_error(ens, mix_ds.x, mix_ds.labels)
    risk = gibbs_risk(ens, tgt.x, tgt.labels)
    return bound_report(d_hat, e_hat, eps, q, risk)
