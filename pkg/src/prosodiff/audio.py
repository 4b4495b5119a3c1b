"""Waveform ingestion and speaker-wise amplitude normalization."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile

PIPELINE_SAMPLE_RATE = 16000


class IngestionError(ValueError):
    """Input audio violates the pipeline's format contract."""


class NormalizationError(ValueError):
    """A speaker group cannot be normalized (e.g. all clips silent)."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = PIPELINE_SAMPLE_RATE
    speaker_id: str = ""
    clip_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path, speaker_id: str = "", clip_id: str = "") -> Waveform:
    """Read a mono 16 kHz PCM16 or float32 WAV file, scaled to [-1, 1]."""
    path = Path(path)
    rate, data = wavfile.read(path)
    if rate != PIPELINE_SAMPLE_RATE:
        raise IngestionError(
            f"{path}: sample rate {rate} Hz, pipeline requires {PIPELINE_SAMPLE_RATE}"
        )
    if data.ndim != 1:
        raise IngestionError(
            f"{path}: {data.shape[1]} channels, pipeline requires mono"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise IngestionError(
            f"{path}: encoding {data.dtype} unsupported (need PCM16 or float32)"
        )
    return Waveform(samples, rate, speaker_id=speaker_id,
                    clip_id=clip_id or path.stem)


def write_wav(path, wav: Waveform) -> None:
    data = np.clip(wav.samples, -1.0, 1.0)
    wavfile.write(Path(path), wav.sample_rate,
                  (data * 32767.0).round().astype(np.int16))


def speaker_normalize(clips) -> list:
    """Divide every clip by its speaker's maximum absolute sample.

    The divisor is taken over ALL clips of the speaker, so relative
    amplitude ratios within a speaker are preserved exactly.
    """
    groups: dict = {}
    for clip in clips:
        groups.setdefault(clip.speaker_id, []).append(clip)

    divisors = {}
    for speaker, group in groups.items():
        peak = max(float(np.max(np.abs(c.samples))) if len(c.samples) else 0.0
                   for c in group)
        if peak == 0.0:
            raise NormalizationError(
                f"speaker {speaker!r}: all clips silent, divisor would be zero"
            )
        divisors[speaker] = peak

    return [replace(c, samples=c.samples / divisors[c.speaker_id])
            for c in clips]
