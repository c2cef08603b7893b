"""STFT magnitude spectrograms with calibrated time/frequency axes.

The input is complex baseband covering [0, fs), so no spectral shift is
applied: row r of the dB matrix is frequency r*fs/Nfft, putting a carrier
at fc on row fc/fs * Nfft. Frame f is centered on sample f*hop + L/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .waveforms import IQBuffer

#: Additive magnitude floor inside the log, keeping silent bins finite.
DB_FLOOR_EPS = 1e-12

_WINDOWS = ("hann", "hamming", "rectangular")


@dataclass(frozen=True)
class StftConfig:
    window: str = "hann"
    window_length: int = 256
    fft_size: int = 256
    hop: int = 64

    def validate(self) -> None:
        if self.window not in _WINDOWS:
            raise ValueError(f"window must be one of {_WINDOWS}, "
                             f"got {self.window!r}")
        if not 0 < self.hop <= self.window_length <= self.fft_size:
            raise ValueError(
                f"need 0 < hop <= window_length <= fft_size, got "
                f"hop={self.hop}, L={self.window_length}, N={self.fft_size}")

    def window_array(self) -> np.ndarray:
        if self.window == "rectangular":
            return np.ones(self.window_length)
        # Periodic (DFT-even) windows: hann at hop L/4 then satisfies the
        # constant squared-overlap property the energy tests rely on.
        return get_window(self.window, self.window_length, fftbins=True)


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    """Frames of a full-window STFT; the trailing partial window is dropped."""
    return (n_samples - cfg.window_length) // cfg.hop + 1


@dataclass
class Spectrogram:
    """dB-magnitude matrix [fft_size rows x frame_count columns]."""

    db: np.ndarray
    fs: float
    hop: int
    window_length: int
    n_samples: int        # length of the source buffer

    @property
    def frame_count(self) -> int:
        return self.db.shape[1]

    @property
    def fft_size(self) -> int:
        return self.db.shape[0]

    def row_frequency(self, row: int) -> float:
        return row * self.fs / self.fft_size

    def frame_center_sample(self, frame: int) -> float:
        return frame * self.hop + self.window_length / 2

    def linear_power(self) -> np.ndarray:
        return 10.0 ** (self.db / 10.0)


def stft(iq: IQBuffer, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Short-time Fourier transform magnitude in dB.

    Each frame is 20*log10(|FFT(window * segment, fft_size)| + eps); the
    full two-sided spectrum of the complex input is kept, rows covering
    [0, fs).
    """
    cfg.validate()
    x = np.asarray(iq.samples)
    L = cfg.window_length
    if x.size < L:
        raise ValueError(f"buffer of {x.size} samples is shorter than one "
                         f"{L}-sample window")
    n_frames = frame_count(x.size, cfg)
    idx = np.arange(n_frames)[:, None] * cfg.hop + np.arange(L)[None, :]
    segments = x[idx] * cfg.window_array()[None, :]
    spectra = np.fft.fft(segments, n=cfg.fft_size, axis=1)
    db = 20.0 * np.log10(np.abs(spectra) + DB_FLOOR_EPS)
    return Spectrogram(db=db.T.copy(), fs=iq.fs, hop=cfg.hop,
                       window_length=L, n_samples=x.size)


def band_energy_fraction(spec: Spectrogram, box) -> float:
    """Fraction of total linear STFT power inside a normalized XYWH box.

    Bins are selected by center: row r belongs to the box when r/fft_size
    falls inside the frequency span, frame f when (f*hop + L/2)/n_samples
    falls inside the time span. Used as the label-geometry oracle.
    """
    if box.w <= 0 or box.h <= 0:
        raise ValueError(f"degenerate box (w={box.w}, h={box.h})")
    power = spec.linear_power()
    freq_frac = np.arange(spec.fft_size) / spec.fft_size
    rows = (freq_frac >= box.y - box.h / 2) & (freq_frac <= box.y + box.h / 2)
    centers = (np.arange(spec.frame_count) * spec.hop
               + spec.window_length / 2) / spec.n_samples
    cols = (centers >= box.x - box.w / 2) & (centers <= box.x + box.w / 2)
    total = power.sum()
    if total <= 0:
        return 0.0
    return float(power[np.ix_(rows, cols)].sum() / total)
