"""STFT, mel filterbank, and log-mel spectrogram computation.

Defaults: n_fft 1024, hop 256, periodic Hann window, reflect center-padding,
80 mel bands over 0..8000 Hz, natural log with a 1e-5 power floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import IngestionError, Waveform


class ParameterError(ValueError):
    pass


@dataclass
class MelConfig:
    n_fft: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    sample_rate: int = 16000
    log_floor: float = 1e-5

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_length


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # [n_frames, n_mels]
    hop_length: int
    n_mels: int
    frame_rate: float

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class MelFilterbank:
    weights: np.ndarray  # [n_mels, n_fft // 2 + 1]
    centers_hz: np.ndarray  # [n_mels]
    fmin: float
    fmax: float


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft: int, n_mels: int, sample_rate: int,
                   fmin: float, fmax: float) -> MelFilterbank:
    """Triangular filters spaced uniformly on the mel scale, peak weight 1."""
    if not (0 <= fmin < fmax <= sample_rate / 2):
        raise ParameterError(
            f"need 0 <= fmin < fmax <= nyquist, got fmin={fmin}, fmax={fmax}, "
            f"nyquist={sample_rate / 2}"
        )
    if n_mels < 2:
        raise ParameterError(f"n_mels must be >= 2, got {n_mels}")

    points_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax),
                                      n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    weights = np.zeros((n_mels, n_fft // 2 + 1))
    for i in range(n_mels):
        left, center, right = points_hz[i], points_hz[i + 1], points_hz[i + 2]
        rising = (bin_hz - left) / (center - left)
        falling = (right - bin_hz) / (right - center)
        weights[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterbank(weights, points_hz[1:-1], fmin, fmax)


def _hann(n_fft: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)


def stft_power(samples: np.ndarray, n_fft: int, hop_length: int) -> np.ndarray:
    """Power spectrogram [n_frames, n_fft // 2 + 1] with reflect center-pad."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < hop_length:
        raise IngestionError(
            f"clip of {len(samples)} samples shorter than one frame "
            f"(hop {hop_length})"
        )
    n_frames = len(samples) // hop_length + 1
    pad = n_fft // 2
    padded = np.pad(samples, pad, mode="reflect")
    window = _hann(n_fft)
    idx = np.arange(n_frames)[:, None] * hop_length + np.arange(n_fft)[None, :]
    frames = padded[idx] * window
    spectrum = np.fft.rfft(frames, axis=1)
    return (spectrum.real ** 2 + spectrum.imag ** 2)


def log_mel(waveform: Waveform, config: MelConfig | None = None,
            filterbank: MelFilterbank | None = None) -> MelSpectrogram:
    config = config or MelConfig()
    if waveform.sample_rate != config.sample_rate:
        raise IngestionError(
            f"waveform at {waveform.sample_rate} Hz, config expects "
            f"{config.sample_rate}"
        )
    if filterbank is None:
        filterbank = mel_filterbank(config.n_fft, config.n_mels,
                                    config.sample_rate, config.fmin,
                                    config.fmax)
    power = stft_power(waveform.samples, config.n_fft, config.hop_length)
    mel_power = power @ filterbank.weights.T
    frames = np.log(np.maximum(mel_power, config.log_floor))
    return MelSpectrogram(frames, config.hop_length, config.n_mels,
                          config.frame_rate)
