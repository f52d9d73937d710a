import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phaser.signal import (
    ComplexSpectrum,
    Spectrogram,
    TimeSeries,
    dft,
    dump_spectrogram_csv,
    hanning,
    hilbert,
    mag_phase,
    stft,
)


def direct_dft(x):
    """O(N^2) summation of the DFT definition; independent of the FFT path."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        for m in range(n):
            out[k] += x[m] * np.exp(-2j * np.pi * k * m / n)
    return out


def band_limited(rng, n, lo=1, hi=None):
    """Random real signal with energy only in bins [lo, hi] (no DC, no Nyquist)."""
    hi = n // 2 - 1 if hi is None else hi
    spec = np.zeros(n, dtype=np.complex128)
    k = np.arange(lo, hi + 1)
    spec[k] = rng.normal(size=len(k)) + 1j * rng.normal(size=len(k))
    spec[n - k] = np.conj(spec[k])
    return np.fft.ifft(spec).real


def rms(a):
    return float(np.sqrt(np.mean(np.square(a))))


# -- dft ----------------------------------------------------------------


def test_dft_dc_only():
    s = dft([1.0, 1.0, 1.0, 1.0])
    assert isinstance(s, ComplexSpectrum)
    np.testing.assert_allclose(s.to_complex(), [4, 0, 0, 0], atol=1e-15)


def test_dft_round_trip_n128():
    x = np.random.default_rng(3).normal(size=128)
    assert rms(dft(dft(x), "inverse") - x) <= 1e-12


def test_dft_cosine_bins():
    n = np.arange(32)
    x = np.cos(2 * np.pi * 3 * n / 32)
    expected = direct_dft(x)
    got = dft(x).to_complex()
    np.testing.assert_allclose(got, expected, atol=1e-10)
    mag = np.abs(got)
    np.testing.assert_allclose(mag[[3, 29]], [16, 16], atol=1e-10)
    assert np.all(np.delete(mag, [3, 29]) < 1e-10)


@pytest.mark.parametrize("n", [2, 6, 12, 16, 64, 100])
def test_dft_matches_direct_summation(n):
    x = np.random.default_rng(n).normal(size=n)
    np.testing.assert_allclose(dft(x).to_complex(), direct_dft(x), atol=1e-9)


@pytest.mark.parametrize("n", [4, 8, 30, 256, 1024])
def test_dft_round_trip_lengths(n):
    x = np.random.default_rng(n).normal(size=n)
    assert rms(dft(dft(x), "inverse") - x) <= 1e-12


def test_dft_errors():
    with pytest.raises(ValueError):
        dft([])
    with pytest.raises(ValueError):
        dft([1.0, np.nan])
    with pytest.raises(ValueError):
        dft([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        dft([1.0, 2.0], direction="sideways")


# -- hilbert ------------------------------------------------------------


def test_hilbert_cos_to_sin():
    t = np.arange(128)
    w0 = 2 * np.pi * 5 / 128
    assert rms(hilbert(2 * np.cos(w0 * t)) - 2 * np.sin(w0 * t)) <= 1e-9


def test_hilbert_constant_to_zero():
    np.testing.assert_allclose(hilbert(np.full(16, 3.5)), 0.0, atol=1e-14)


def test_hilbert_anti_involution():
    x = band_limited(np.random.default_rng(1), 128)
    assert rms(hilbert(hilbert(x)) + x) <= 1e-9


def test_hilbert_matches_frequency_domain_oracle():
    rng = np.random.default_rng(11)
    x = rng.normal(size=64)
    spec = direct_dft(x)
    k = np.arange(64)
    mult = np.where((k > 0) & (k < 32), -1j, np.where(k > 32, 1j, 0))
    oracle = np.array([np.sum(spec * mult * np.exp(2j * np.pi * k * m / 64)) / 64 for m in range(64)])
    np.testing.assert_allclose(hilbert(x), oracle.real, atol=1e-10)


def test_hilbert_phase_shift_at_tone_bin():
    t = np.arange(128)
    x = np.cos(2 * np.pi * 9 * t / 128 + 0.3)
    a, b = dft(x).to_complex()[9], dft(hilbert(x)).to_complex()[9]
    diff = np.angle(b) - np.angle(a)
    assert abs(np.angle(np.exp(1j * (diff + np.pi / 2)))) <= 1e-9


def test_hilbert_errors():
    with pytest.raises(ValueError):
        hilbert(np.ones(7))
    with pytest.raises(ValueError):
        hilbert(np.array([1.0, np.inf, 0.0, 1.0]))
    with pytest.raises(ValueError):
        hilbert(np.ones(2))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)))
def test_hilbert_preserves_magnitude(x):
    a = np.abs(np.fft.fft(x))
    b = np.abs(np.fft.fft(hilbert(x)))
    keep = np.ones(64, dtype=bool)
    keep[[0, 32]] = False
    np.testing.assert_allclose(b[keep], a[keep], atol=1e-9 * max(1.0, np.abs(x).max()) * 64)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hilbert_orthogonality(seed):
    x = band_limited(np.random.default_rng(seed), 128)
    h = hilbert(x)
    assert abs(x @ h) / (np.linalg.norm(x) * np.linalg.norm(h)) <= 1e-9


# -- stft ---------------------------------------------------------------


def test_hanning_length4():
    np.testing.assert_allclose(hanning(4), [0, 0.75, 0.75, 0], atol=1e-15)


def test_stft_shape_wisdm_config():
    x = TimeSeries(np.random.default_rng(0).normal(size=(3, 128)), 20.0)
    s = stft(x, seg_len=4, nfft=1024)
    assert isinstance(s, Spectrogram)
    assert s.shape == (3, 513, 32)
    assert s.hop == 4


def test_stft_zero_signal():
    s = stft(np.zeros((2, 64)), 8, 16)
    assert np.all(s.data == 0)


def test_stft_impulse_frame0():
    x = np.zeros((1, 16))
    x[0, 1] = 1.0
    s = stft(x, 4, 8)
    np.testing.assert_allclose(np.abs(s.data[0, :, 0]), 0.75, atol=1e-15)
    assert np.all(np.abs(s.data[0, :, 1:]) == 0)


def test_stft_frame_matches_direct_sum():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 40))
    s = stft(x, 8, 16)
    w = hanning(8)
    n = 3
    frame = x[0, n * 8 : n * 8 + 8] * w
    k = np.arange(9)
    oracle = np.array([np.sum(frame * np.exp(-2j * np.pi * kk * np.arange(8) / 16)) for kk in k])
    np.testing.assert_allclose(s.data[0, :, n], oracle, atol=1e-12)
    assert s.shape == (1, 9, 5)  # trailing partial frame dropped


def test_stft_phase_sign_conjugates():
    x = np.random.default_rng(2).normal(size=(2, 32))
    a = stft(x, 8, 16).data
    b = stft(x, 8, 16, phase_sign=+1).data
    np.testing.assert_allclose(b, np.conj(a), atol=1e-12)


def test_stft_linearity():
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=(2, 3, 128))
    a, b = 1.7, -0.4
    lhs = stft(a * x + b * y, 4, 64).data
    rhs = a * stft(x, 4, 64).data + b * stft(y, 4, 64).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_stft_per_variate_windows_keep_shape():
    x = np.random.default_rng(0).normal(size=(3, 64))
    s = stft(x, 4, 32, window_lengths=[2, 8, 32])
    assert s.shape == (3, 17, 16)


def test_stft_errors():
    with pytest.raises(ValueError):
        stft(np.zeros((1, 8)), 16, 32)
    with pytest.raises(ValueError):
        stft(np.zeros((1, 64)), 16, 8)
    with pytest.raises(ValueError):
        stft(np.zeros((1, 64)), 4, 24)


# -- mag/phase ----------------------------------------------------------


def test_mag_phase_examples():
    mp = mag_phase(np.array([3 + 4j, 0j, 1 - 1j]))
    np.testing.assert_allclose(mp.mag, [5, 0, np.sqrt(2)], atol=1e-15)
    np.testing.assert_allclose(mp.pha, [np.arctan2(4, 3), 0, -np.pi / 4], atol=1e-15)
    assert abs(mp.pha[0] - 0.92730) < 1e-5


def test_mag_phase_range():
    z = np.array([-1 + 0j, -1 - 0j, complex(-1, -1e-300)])
    pha = mag_phase(z).pha
    assert np.all(pha > -np.pi) and np.all(pha <= np.pi)


def test_time_series_validation():
    with pytest.raises(ValueError):
        TimeSeries(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        TimeSeries(np.array([[1.0, np.nan, 0, 0]]))
    ts = TimeSeries(np.zeros(8))
    assert ts.n_variates == 1 and ts.length == 8


def test_spectrogram_csv_dump(tmp_path):
    s = stft(np.random.default_rng(0).normal(size=(2, 8)), 4, 4)
    p = tmp_path / "spec.csv"
    dump_spectrogram_csv(s, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "variate,bin,frame,re,im"
    assert len(lines) == 1 + 2 * 3 * 2
