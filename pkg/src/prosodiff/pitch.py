"""YIN pitch tracking (cumulative-mean-normalized difference function with
parabolic lag refinement) and log-domain pitch normalization.

Frames are centered on mel frame centers (multiples of the hop) so pitch
contours align index-for-index with log-mel spectrograms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Waveform

REFERENCE_HZ = 55.0  # normalized pitch = log2(f0 / 55)
DEFAULT_F_LO = 65.0
DEFAULT_F_HI = 500.0
VOICING_THRESHOLD = 0.15
_WINDOW = 1024  # integration window of the difference function
_SILENCE_POWER = 1e-10


class TooShortError(ValueError):
    pass


@dataclass
class PitchContour:
    f0: np.ndarray          # Hz, 0 where unvoiced
    voiced: np.ndarray      # bool mask
    normalized: np.ndarray  # log2(f0 / 55), 0 sentinel where unvoiced
    frame_rate: float

    def __len__(self):
        return len(self.f0)


def _difference_function(segment: np.ndarray, window: int,
                         tau_max: int) -> np.ndarray:
    """d(tau) = sum_{j<window} (x_j - x_{j+tau})^2 for tau in [0, tau_max]."""
    x = segment
    # autocorrelation via FFT
    size = len(x)
    nfft = 1 << int(np.ceil(np.log2(2 * size)))
    spec = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(spec * np.conj(spec), nfft)[:tau_max + 1]
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    taus = np.arange(tau_max + 1)
    power0 = csum[window] - csum[0]
    power_tau = csum[taus + window] - csum[taus]
    return power0 + power_tau - 2.0 * acf


def _cmnd(d: np.ndarray) -> np.ndarray:
    out = np.ones_like(d)
    running = np.cumsum(d[1:])
    nonzero = running > 0
    taus = np.arange(1, len(d))
    out[1:][nonzero] = d[1:][nonzero] * taus[nonzero] / running[nonzero]
    out[1:][~nonzero] = 1.0
    return out


def _parabolic(values: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(values) - 1:
        return float(i)
    a, b, c = values[i - 1], values[i], values[i + 1]
    denom = a - 2.0 * b + c
    if denom == 0:
        return float(i)
    return i + 0.5 * (a - c) / denom


def estimate_pitch(waveform: Waveform, f_lo: float = DEFAULT_F_LO,
                   f_hi: float = DEFAULT_F_HI, hop_length: int = 256,
                   threshold: float = VOICING_THRESHOLD) -> PitchContour:
    if not (50.0 <= f_lo < f_hi <= 600.0):
        raise ValueError(f"pitch range [{f_lo}, {f_hi}] outside [50, 600]")
    sr = waveform.sample_rate
    x = waveform.samples
    if len(x) < 2.0 * sr / f_lo:
        raise TooShortError(
            f"clip of {len(x)} samples shorter than two periods at {f_lo} Hz"
        )
    tau_min = max(2, int(np.floor(sr / f_hi)))
    tau_max = int(np.ceil(sr / f_lo))
    seg_len = _WINDOW + tau_max
    half = seg_len // 2

    n_frames = len(x) // hop_length + 1
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    padded = np.pad(x, half)

    for i in range(n_frames):
        center = i * hop_length
        segment = padded[center:center + seg_len]
        if np.mean(segment * segment) < _SILENCE_POWER:
            continue
        d = _difference_function(segment, _WINDOW, tau_max)
        dn = _cmnd(d)

        tau = None
        for candidate in range(tau_min, tau_max):
            if dn[candidate] < threshold:
                while (candidate + 1 < tau_max
                       and dn[candidate + 1] < dn[candidate]):
                    candidate += 1
                tau = candidate
                break
        if tau is None:
            tau = tau_min + int(np.argmin(dn[tau_min:tau_max + 1]))
            if dn[tau] >= threshold:
                continue  # unvoiced
        refined = _parabolic(dn, tau)
        freq = sr / refined
        f0[i] = min(max(freq, f_lo), f_hi)
        voiced[i] = True

    normalized = np.where(voiced, np.log2(np.maximum(f0, 1e-12) / REFERENCE_HZ),
                          0.0)
    return PitchContour(f0, voiced, normalized, sr / hop_length)


def normalize_pitch(contour: PitchContour) -> PitchContour:
    """Fill the normalized field: log2(f0/55) on voiced frames, 0 elsewhere."""
    normalized = np.where(contour.voiced,
                          np.log2(np.maximum(contour.f0, 1e-12) / REFERENCE_HZ),
                          0.0)
    return PitchContour(contour.f0.copy(), contour.voiced.copy(), normalized,
                        contour.frame_rate)


def denormalize_pitch(normalized: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    """Inverse of normalize_pitch on voiced frames."""
    return np.where(voiced, REFERENCE_HZ * np.exp2(normalized), 0.0)
