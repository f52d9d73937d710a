"""Discrete Fourier primitives: DFT, Hilbert transform, STFT and magnitude/phase split.

All spectral math runs in float64.  The forward DFT uses the analysis kernel
``exp(-2j*pi*k*n/N)``; pass ``phase_sign=+1`` to :func:`stft` to get the
conjugate (``exp(+i xi_k m)``) convention instead.  Magnitudes are identical
under both conventions and phases are negated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TimeSeries",
    "ComplexSpectrum",
    "Spectrogram",
    "MagPhase",
    "dft",
    "hilbert",
    "hanning",
    "stft",
    "mag_phase",
    "dump_spectrogram_csv",
]

# above this the imaginary residue of the Hilbert output means a bug, not rounding
_IMAG_FAULT = 1e-6


@dataclass(frozen=True)
class TimeSeries:
    """A multivariate sample, ``values`` shaped (V, T)."""

    values: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2:
            raise ValueError(f"TimeSeries values must be 2-D (V, T), got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 4:
            raise ValueError(f"TimeSeries needs V >= 1 and T >= 4, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("TimeSeries values must be finite")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_variates(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ComplexSpectrum:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if np.shape(self.re) != np.shape(self.im):
            raise ValueError("re and im must have equal shapes")

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexSpectrum":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def __len__(self) -> int:
        return len(self.re)


@dataclass(frozen=True)
class Spectrogram:
    """One-sided STFT, ``data`` shaped (V, nfft // 2 + 1, n_frames)."""

    data: np.ndarray
    seg_len: int
    nfft: int
    hop: int

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


@dataclass(frozen=True)
class MagPhase:
    mag: np.ndarray
    pha: np.ndarray


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _fft_pow2(z: np.ndarray, sign: int) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    n = z.shape[-1]
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = z[..., rev].astype(np.complex128, copy=True)
    lead = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        a = blocks.reshape(*lead, n)
        size *= 2
    return a


def _dft_direct(z: np.ndarray, sign: int) -> np.ndarray:
    n = z.shape[-1]
    k = np.arange(n)
    kern = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    return z.astype(np.complex128) @ kern.T


def _transform(z: np.ndarray, sign: int) -> np.ndarray:
    n = z.shape[-1]
    if _is_pow2(n):
        return _fft_pow2(z, sign)
    return _dft_direct(z, sign)


def _check_signal(x: np.ndarray, what: str = "input") -> None:
    if x.shape[-1] == 0:
        raise ValueError(f"{what} must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite values")


def dft(x, direction: str = "forward"):
    """Full-length DFT along the last axis.

    Parameters
    ----------
    x : array_like
        Real signal (forward) or a :class:`ComplexSpectrum` / complex array
        (inverse).  Length must be even and at least 2.
    direction : {"forward", "inverse"}
        The inverse carries the ``1/N`` factor.

    Returns
    -------
    ComplexSpectrum for ``forward`` on a 1-D input, complex ndarray for batched
    forward input, and the real part of the reconstruction for ``inverse``.
    """
    if isinstance(x, ComplexSpectrum):
        x = x.to_complex()
    x = np.asarray(x)
    if x.ndim == 0:
        raise ValueError("dft needs at least one dimension")
    _check_signal(x)
    n = x.shape[-1]
    if n < 2 or n % 2:
        raise ValueError(f"dft length must be even and >= 2, got {n}")
    if direction == "forward":
        out = _transform(x, -1)
        return ComplexSpectrum.from_complex(out) if out.ndim == 1 else out
    if direction == "inverse":
        out = _transform(x, +1) / n
        # non-Hermitian spectra have no real inverse; hand back the complex result
        if np.max(np.abs(out.imag), initial=0.0) > 1e-9 * max(1.0, float(np.max(np.abs(out)))):
            return out
        return out.real
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def _hilbert_multiplier(n: int) -> np.ndarray:
    # -i*sgn(k): DC and Nyquist map to 0
    h = np.zeros(n, dtype=np.complex128)
    h[1 : n // 2] = -1j
    h[n // 2 + 1 :] = 1j
    return h


def hilbert(x) -> np.ndarray:
    """Hilbert transform along the last axis.

    Computed as ``IDFT(-i * sgn(k) * DFT(x))``.  DC and Nyquist content is
    annihilated, so ``hilbert(2*cos(w t)) == 2*sin(w t)`` for bin-aligned
    tones and ``hilbert(hilbert(x)) == -x`` on DC/Nyquist-free signals.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_signal(x)
    n = x.shape[-1]
    if n < 4 or n % 2:
        raise ValueError(f"hilbert needs an even length >= 4, got {n}")
    spec = _transform(x, -1) * _hilbert_multiplier(n)
    out = _transform(spec, +1) / n
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    resid = float(np.max(np.abs(out.imag), initial=0.0)) / scale
    if resid > _IMAG_FAULT:
        raise ArithmeticError(f"hilbert output has imaginary residue {resid:.3e}")
    return out.real


def hanning(length: int) -> np.ndarray:
    """Symmetric Hann window ``0.5 * (1 - cos(2 pi n / (W - 1)))``."""
    if length < 2:
        raise ValueError("window length must be >= 2")
    n = np.arange(length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (length - 1)))


def stft(x, seg_len: int, nfft: int, *, phase_sign: int = -1, window_lengths=None) -> Spectrogram:
    """Non-overlapping Hann-windowed STFT, one-sided.

    Frames start every ``seg_len`` samples; trailing samples that do not fill a
    frame are dropped.  Each frame is zero-padded to ``nfft``.

    ``window_lengths`` optionally gives a per-variate window length (<= nfft)
    while the hop stays ``seg_len``; frames that run past the end of the signal
    are zero-filled so every variate has the same frame count.
    """
    values = x.values if isinstance(x, TimeSeries) else np.atleast_2d(np.asarray(x, dtype=np.float64))
    _check_signal(values)
    v_count, t_len = values.shape
    if seg_len < 2:
        raise ValueError("seg_len must be >= 2")
    if not _is_pow2(nfft):
        raise ValueError(f"nfft must be a power of 2, got {nfft}")
    if nfft < seg_len:
        raise ValueError(f"nfft ({nfft}) must be >= seg_len ({seg_len})")
    if t_len < seg_len:
        raise ValueError(f"series length {t_len} is shorter than seg_len {seg_len}")
    if phase_sign not in (-1, 1):
        raise ValueError("phase_sign must be -1 or +1")
    n_frames = t_len // seg_len
    n_bins = nfft // 2 + 1
    if window_lengths is None:
        window_lengths = [seg_len] * v_count
    if len(window_lengths) != v_count:
        raise ValueError("window_lengths needs one entry per variate")

    out = np.empty((v_count, n_bins, n_frames), dtype=np.complex128)
    starts = np.arange(n_frames) * seg_len
    for v, w_len in enumerate(window_lengths):
        if not 2 <= w_len <= nfft:
            raise ValueError(f"window length {w_len} outside [2, nfft]")
        padded = np.concatenate([values[v], np.zeros(max(0, starts[-1] + w_len - t_len))])
        frames = padded[starts[:, None] + np.arange(w_len)[None, :]] * hanning(w_len)
        buf = np.zeros((n_frames, nfft))
        buf[:, :w_len] = frames
        spec = _transform(buf, phase_sign)[:, :n_bins]
        out[v] = spec.T
    return Spectrogram(out, seg_len=seg_len, nfft=nfft, hop=seg_len)


def mag_phase(s) -> MagPhase:
    """Split a spectrogram (or raw complex array) into magnitude and phase.

    Phase is ``arctan2(im, re)``, forced to 0 where the magnitude is 0 and
    mapped from -pi to +pi so it lies in (-pi, pi].
    """
    z = s.data if isinstance(s, Spectrogram) else np.asarray(s, dtype=np.complex128)
    if not np.all(np.isfinite(z)):
        raise ValueError("spectrogram contains non-finite entries")
    mag = np.hypot(z.real, z.imag)
    pha = np.arctan2(z.imag, z.real)
    pha = np.where(mag == 0, 0.0, pha)
    pha = np.where(pha <= -np.pi, np.pi, pha)
    return MagPhase(mag, pha)


def dump_spectrogram_csv(s: Spectrogram, path) -> None:
    """Debug dump with columns variate,bin,frame,re,im."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variate", "bin", "frame", "re", "im"])
        for (v, k, n), z in np.ndenumerate(s.data):
            w.writerow([v, k, n, repr(float(z.real)), repr(float(z.imag))])
