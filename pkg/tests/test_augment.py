import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaser.augment import (
    AugmentSpec,
    augment,
    baseline_augment,
    circular_shift,
    hilbert_augment,
    merge,
    permute_windows,
    phase_combine,
    random_phase_augment,
    random_rotation,
    rotate,
)
from phaser.data import LabeledDataset
from phaser.signal import hilbert
from phaser.stationarity import adf_statistic


def make_ds(x, labels=None, k=3, domains=None):
    x = np.asarray(x, dtype=np.float64)
    labels = np.arange(len(x)) % k if labels is None else labels
    return LabeledDataset(x, labels, k, domains)


def rand_ds(n=6, v=3, t=64, seed=0, dtype=np.float64):
    x = np.random.default_rng(seed).standard_normal((n, v, t)).astype(dtype)
    return LabeledDataset(x, np.arange(n) % 3, 3, np.arange(n) % 2)


def test_hilbert_augment_cos_to_sin():
    t = np.arange(128)
    w = 2 * np.pi * 4 / 128
    ds = make_ds(np.broadcast_to(2 * np.cos(w * t), (2, 3, 128)))
    out = hilbert_augment(ds)
    np.testing.assert_allclose(out.x, np.broadcast_to(2 * np.sin(w * t), (2, 3, 128)), atol=1e-9)
    np.testing.assert_array_equal(out.labels, ds.labels)


def test_hilbert_augment_constants_vanish():
    out = hilbert_augment(make_ds(np.full((3, 2, 32), 4.0)))
    np.testing.assert_allclose(out.x, 0.0, atol=1e-12)


def test_hilbert_augment_preserves_magnitude_per_sample():
    ds = rand_ds(seed=4)
    out = hilbert_augment(ds)
    a, b = np.abs(np.fft.fft(ds.x)), np.abs(np.fft.fft(out.x))
    keep = np.ones(64, bool)
    keep[[0, 32]] = False
    np.testing.assert_allclose(b[..., keep], a[..., keep], atol=1e-9)
    np.testing.assert_array_equal(out.domains, ds.domains)


def test_phase_combine_special_angles():
    x = np.random.default_rng(1).standard_normal((2, 64))
    np.testing.assert_array_equal(phase_combine(x, 0.0), x)
    np.testing.assert_allclose(phase_combine(x, np.pi / 2), -hilbert(x), atol=1e-15)


def test_random_phase_forced_zero_is_identity():
    ds = rand_ds(seed=2)
    out = random_phase_augment(ds, AugmentSpec("hilbert_random_phase", (0.0, 0.0), seed=5))
    np.testing.assert_array_equal(out.x, ds.x)


def test_random_phase_forced_half_pi():
    ds = rand_ds(seed=2)
    out = random_phase_augment(ds, AugmentSpec("hilbert_random_phase", (np.pi / 2, np.pi / 2)))
    np.testing.assert_allclose(out.x, -hilbert(ds.x), atol=1e-12)


def test_random_phase_quarter_pi_tone_bin():
    t = np.arange(128)
    x = np.cos(2 * np.pi * 6 * t / 128)
    out = random_phase_augment(make_ds(x[None, None]), AugmentSpec("hilbert_random_phase", (np.pi / 4, np.pi / 4)))
    a, b = np.fft.fft(x)[6], np.fft.fft(out.x[0, 0])[6]
    assert abs(np.angle(b) - np.angle(a) - np.pi / 4) <= 1e-9
    assert abs(abs(b) - abs(a)) <= 1e-9


def test_random_phase_one_phi_per_sample():
    # each sample's output must be cos(phi) x - sin(phi) HT(x) with one phi for all variates
    ds = rand_ds(n=4, seed=8)
    out = random_phase_augment(ds, AugmentSpec("hilbert_random_phase", seed=3))
    h = hilbert(ds.x)
    for i in range(4):
        coef, *_ = np.linalg.lstsq(np.stack([ds.x[i].ravel(), -h[i].ravel()], 1), out.x[i].ravel(), rcond=None)
        assert abs(coef[0] ** 2 + coef[1] ** 2 - 1) <= 1e-9
        phi = np.arctan2(coef[1], coef[0])
        assert -np.pi / 2 - 1e-9 <= phi <= np.pi / 2 + 1e-9
        np.testing.assert_allclose(out.x[i], phase_combine(ds.x[i], phi), atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-np.pi, np.pi), st.floats(0, np.pi))
def test_random_phase_preserves_magnitude(seed, lo, width):
    hi = min(lo + width, np.pi)
    ds = rand_ds(n=3, seed=seed % 1000)
    out = random_phase_augment(ds, AugmentSpec("hilbert_random_phase", (lo, hi), seed=seed))
    a, b = np.abs(np.fft.fft(ds.x)), np.abs(np.fft.fft(out.x))
    np.testing.assert_allclose(b[..., 1:32], a[..., 1:32], atol=1e-9)


def test_random_phase_errors():
    with pytest.raises(ValueError, match="empty"):
        random_phase_augment(rand_ds(), AugmentSpec("hilbert_random_phase", (1.0, 0.5)))
    with pytest.raises(ValueError):
        AugmentSpec("hilbert_random_phase", (-4.0, 0.0))
    with pytest.raises(ValueError):
        random_phase_augment(rand_ds(), AugmentSpec("hilbert_fixed"))
    with pytest.raises(ValueError):
        AugmentSpec("jitter")


def test_determinism():
    ds = rand_ds(seed=3, dtype=np.float32)
    for spec in (
        AugmentSpec("hilbert_random_phase", seed=11),
        AugmentSpec("rotation", seed=11),
        AugmentSpec("permutation", window=8, seed=11),
        AugmentSpec("circular_shift", seed=11),
    ):
        a, b = augment(ds, spec), augment(ds, spec)
        assert a.x.tobytes() == b.x.tobytes()
        assert a.x.dtype == np.float32
        np.testing.assert_array_equal(a.labels, ds.labels)
        np.testing.assert_array_equal(a.domains, ds.domains)


def test_rotation_matrices_are_rotations():
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = random_rotation(rng)
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(r) - 1) <= 1e-12


def test_identity_rotation():
    x = np.random.default_rng(0).standard_normal((2, 3, 16))
    np.testing.assert_allclose(rotate(x, np.stack([np.eye(3)] * 2)), x, atol=0)


def test_rotation_preserves_norm_per_timestep():
    ds = rand_ds(seed=5)
    out = baseline_augment(ds, AugmentSpec("rotation", seed=1))
    np.testing.assert_allclose(np.linalg.norm(out.x, axis=1), np.linalg.norm(ds.x, axis=1), atol=1e-10)


def test_rotation_needs_three_variates():
    with pytest.raises(ValueError, match="V = 3"):
        baseline_augment(rand_ds(v=2), AugmentSpec("rotation"))


def test_circular_shift_full_period():
    x = np.random.default_rng(0).standard_normal((3, 20))
    np.testing.assert_array_equal(circular_shift(x, 20), x)
    np.testing.assert_array_equal(circular_shift(x, 3)[:, 3:], x[:, :-3])


def test_circular_shift_bounded():
    ds = rand_ds(n=30, t=50, seed=1)
    out = baseline_augment(ds, AugmentSpec("circular_shift", max_shift_frac=0.2, seed=4))
    for a, b in zip(ds.x, out.x):
        shifts = [s for s in range(50) if np.array_equal(np.roll(a, s, axis=-1), b)]
        assert shifts and min(shifts) <= 10


def test_permutation_single_window_identity():
    ds = rand_ds(seed=2)
    out = baseline_augment(ds, AugmentSpec("permutation", window=64))
    np.testing.assert_array_equal(out.x, ds.x)


def test_permutation_keeps_window_contents():
    x = np.arange(24.0).reshape(1, 24)
    y = permute_windows(x, 6, np.random.default_rng(3))
    blocks = sorted(tuple(b) for b in y.reshape(4, 6))
    assert blocks == sorted(tuple(b) for b in x.reshape(4, 6))


def test_permutation_window_must_divide():
    with pytest.raises(ValueError, match="divide"):
        baseline_augment(rand_ds(t=64), AugmentSpec("permutation", window=7))


def test_merge_cardinality_and_labels():
    ds = rand_ds(n=5)
    m = merge(ds, hilbert_augment(ds))
    assert len(m) == 10
    assert sorted(m.labels.tolist()) == sorted(ds.labels.tolist() * 2)
    np.testing.assert_array_equal(m.domains, np.r_[ds.domains, ds.domains])


def test_merge_with_empty_is_identity():
    ds = rand_ds(n=5)
    assert merge(ds, LabeledDataset.empty_like(ds)).equals(ds)


def test_merge_errors():
    ds = rand_ds()
    with pytest.raises(ValueError):
        merge(ds, rand_ds(t=32))
    other = LabeledDataset(ds.x, ds.labels, 4)
    with pytest.raises(ValueError):
        merge(ds, other)


def test_ht_changes_adf_of_trended_sinusoids():
    # nonstationary sinusoids with a trend term: HT moves the ADF statistic
    t = np.arange(256)
    moved = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = 0.02 * rng.uniform(0.5, 2) * t + np.sin(2 * np.pi * rng.integers(3, 20) * t / 256 + rng.uniform(0, 6)) + 0.3 * rng.standard_normal(256)
        if abs(adf_statistic(hilbert(x)).statistic - adf_statistic(x).statistic) > 0.1:
            moved += 1
    assert moved >= 16
