"""Pitch estimation directly from log-mel spectrograms by matching harmonic
templates, used to score generated mels (which never pass through a vocoder).

Templates are built from the same harmonic source model the synthetic corpus
uses (amplitude 1/k per harmonic) pushed through the mel filterbank. Both
templates and observed frames have their smooth spectral envelope removed
(moving average across bands) before correlation, so matching is driven by
the harmonic comb rather than per-speaker tilt or loudness. The same
estimator is applied to reference and generated mels so estimator bias
cancels in paired metrics.
"""

from __future__ import annotations

import numpy as np

from .melspec import MelConfig, MelSpectrogram, mel_filterbank
from .pitch import REFERENCE_HZ, PitchContour


def _remove_envelope(logmel: np.ndarray, window: int = 9) -> np.ndarray:
    """Subtract a reflect-padded moving average along the band axis."""
    pad = window // 2
    padded = np.pad(logmel, [(0, 0)] * (logmel.ndim - 1) + [(pad, pad)],
                    mode="reflect")
    kernel = np.ones(window) / window
    smooth = np.apply_along_axis(
        lambda row: np.convolve(row, kernel, mode="valid"), -1, padded)
    return logmel - smooth


class MelPitchEstimator:
    def __init__(self, config: MelConfig | None = None, f_lo: float = 65.0,
                 f_hi: float = 500.0, n_grid: int = 240,
                 max_harmonics: int = 12, voicing_margin: float = 0.5,
                 envelope_window: int = 9):
        self.config = config or MelConfig()
        self.f_lo = f_lo
        self.f_hi = f_hi
        self.voicing_margin = voicing_margin
        self.envelope_window = envelope_window
        fb = mel_filterbank(self.config.n_fft, self.config.n_mels,
                            self.config.sample_rate, self.config.fmin,
                            self.config.fmax)
        # triangular filter response evaluated at exact frequencies
        points = np.concatenate([[self.config.fmin], fb.centers_hz,
                                 [self.config.fmax]])
        self.grid = np.geomspace(f_lo, f_hi, n_grid)
        templates = np.zeros((n_grid, self.config.n_mels))
        for j, f0 in enumerate(self.grid):
            kmax = min(max_harmonics,
                       int((self.config.fmax - 1e-9) // f0))
            power = np.zeros(self.config.n_mels)
            for k in range(1, max(kmax, 1) + 1):
                freq = k * f0
                if freq >= self.config.fmax:
                    break
                power += (1.0 / k) ** 2 * self._response(points, freq)
            logmel = np.log(np.maximum(power, self.config.log_floor * 1e-3))
            templates[j] = logmel
        templates = _remove_envelope(templates, envelope_window)
        norms = np.linalg.norm(templates, axis=1)
        self.templates = templates / np.maximum(norms[:, None], 1e-12)

    @staticmethod
    def _response(points: np.ndarray, freq: float) -> np.ndarray:
        """Weight of each triangular filter at a single frequency."""
        left, center, right = points[:-2], points[1:-1], points[2:]
        rising = (freq - left) / np.maximum(center - left, 1e-12)
        falling = (right - freq) / np.maximum(right - center, 1e-12)
        return np.clip(np.minimum(rising, falling), 0.0, None)

    def estimate(self, mel: MelSpectrogram) -> PitchContour:
        floor = np.log(self.config.log_floor)
        n = mel.n_frames
        f0 = np.zeros(n)
        voiced = np.zeros(n, dtype=bool)
        frames = _remove_envelope(mel.frames, self.envelope_window)
        norms = np.linalg.norm(frames, axis=1)
        scores = frames @ self.templates.T  # [n_frames, n_grid]
        best = np.argmax(scores, axis=1)
        for i in range(n):
            if mel.frames[i].mean() <= floor + self.voicing_margin \
                    or norms[i] == 0:
                continue
            j = best[i]
            refined = self._parabolic_grid(scores[i], j)
            f0[i] = min(max(refined, self.f_lo), self.f_hi)
            voiced[i] = True
        normalized = np.where(voiced,
                              np.log2(np.maximum(f0, 1e-12) / REFERENCE_HZ),
                              0.0)
        return PitchContour(f0, voiced, normalized, mel.frame_rate)

    def _parabolic_grid(self, scores: np.ndarray, j: int) -> float:
        if j <= 0 or j >= len(self.grid) - 1:
            return float(self.grid[j])
        a, b, c = scores[j - 1], scores[j], scores[j + 1]
        denom = a - 2.0 * b + c
        shift = 0.0 if denom == 0 else 0.5 * (a - c) / denom
        shift = float(np.clip(shift, -1.0, 1.0))
        # grid is geometric, so log-frequency spacing is constant
        dlog = np.log(self.grid[1]) - np.log(self.grid[0])
        return float(np.exp(np.log(self.grid[j]) + shift * dlog))
