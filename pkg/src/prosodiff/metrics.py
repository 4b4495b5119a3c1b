"""Prosody metric suite: global/local F0 deviation, energy consistency, and
clip-level / time-windowed speaker-embedding cosine similarity, plus the
paired t-test used for system comparisons.

The speaker embedding is a statistics vector (per-band mean and standard
deviation of log-mel values, L2-normalized), a reproducible stand-in for a
pretrained verification network, so absolute similarity values are not
comparable across embedding choices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .melspec import MelSpectrogram
from .pitch import PitchContour
from .prosody import EnergyContour

#: sentinel for metrics that are undefined on a clip (e.g. fully unvoiced)
UNDEFINED = None


class MetricError(ValueError):
    pass


def global_f0_dev(synth: PitchContour, speaker_global_f0: float):
    """|mean voiced f0 of synth - speaker global F0|, in Hz."""
    if speaker_global_f0 <= 0:
        raise MetricError(f"speaker global F0 must be > 0, got {speaker_global_f0}")
    if not synth.voiced.any():
        return UNDEFINED
    return abs(float(synth.f0[synth.voiced].mean()) - speaker_global_f0)


def local_f0_dev(synth: PitchContour, ref: PitchContour):
    """Mean |f0_synth - f0_ref| over frames voiced in both, min-length
    truncated. Undefined when no co-voiced frames exist."""
    n = min(len(synth), len(ref))
    both = synth.voiced[:n] & ref.voiced[:n]
    if not both.any():
        return UNDEFINED
    return float(np.abs(synth.f0[:n][both] - ref.f0[:n][both]).mean())


def energy_consistency(synth: EnergyContour, ref: EnergyContour) -> float:
    """Mean squared frame-wise energy difference, min-length truncated."""
    n = min(len(synth), len(ref))
    d = synth.energy[:n] - ref.energy[:n]
    return float((d * d).mean())


@dataclass
class SpeakerStatsEmbedding:
    vector: np.ndarray  # [2 * n_mels], unit L2 norm


def stats_embedding(mel: MelSpectrogram) -> SpeakerStatsEmbedding:
    """[per-band mean | per-band std] of log-mel values, L2-normalized."""
    if mel.n_frames < 2:
        raise MetricError(
            f"stats embedding needs >= 2 frames, got {mel.n_frames}"
        )
    vec = np.concatenate([mel.frames.mean(axis=0), mel.frames.std(axis=0)])
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise MetricError("degenerate all-zero spectrogram")
    return SpeakerStatsEmbedding(vec / norm)


def _cosine(a: SpeakerStatsEmbedding, b: SpeakerStatsEmbedding) -> float:
    return float(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0))


def resem(synth_mel: MelSpectrogram, ref_mel: MelSpectrogram) -> float:
    """Cosine similarity between clip-level speaker embeddings."""
    return _cosine(stats_embedding(synth_mel), stats_embedding(ref_mel))


def resem_tv(synth_mel: MelSpectrogram, ref_mel: MelSpectrogram,
             window_seconds: float = 2.0, hop_seconds: float = 1.0) -> float:
    """Mean windowed embedding cosine over aligned windows; trailing partial
    windows are dropped."""
    win = int(round(window_seconds * synth_mel.frame_rate))
    hop = int(round(hop_seconds * synth_mel.frame_rate))
    n = min(synth_mel.n_frames, ref_mel.n_frames)
    if n < win:
        raise MetricError(
            f"clips of {n} frames shorter than the {win}-frame window"
        )
    sims = []
    for start in range(0, n - win + 1, hop):
        a = MelSpectrogram(synth_mel.frames[start:start + win],
                           synth_mel.hop_length, synth_mel.n_mels,
                           synth_mel.frame_rate)
        b = MelSpectrogram(ref_mel.frames[start:start + win],
                           ref_mel.hop_length, ref_mel.n_mels,
                           ref_mel.frame_rate)
        sims.append(_cosine(stats_embedding(a), stats_embedding(b)))
    return float(np.mean(sims))


def paired_ttest(a, b):
    """Two-sided paired t-test on per-clip values. Returns (t, p).

    Identical samples (all differences zero) give t=0, p=1 by convention.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"paired samples must be equal-length 1-d, got "
                          f"{a.shape} and {b.shape}")
    if len(a) < 2:
        raise MetricError("paired t-test needs at least 2 pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 0.0, 1.0
    t = d.mean() / (sd / math.sqrt(len(d)))
    p = 2.0 * stats.t.sf(abs(t), df=len(d) - 1)
    return float(t), float(p)


METRIC_NAMES = ["gf0", "lf0", "ec", "resem", "resem_tv"]
#: directions for ranking: -1 means lower is better
METRIC_SIGNS = {"gf0": -1, "lf0": -1, "ec": -1, "resem": 1, "resem_tv": 1}


@dataclass
class MetricReport:
    """Per-clip metric values keyed by (system, metric); undefined clips are
    excluded from corpus means but counted."""

    per_clip: dict = field(default_factory=dict)  # (system, metric) -> {clip: value|None}

    def add(self, system: str, metric: str, clip_id: str, value):
        self.per_clip.setdefault((system, metric), {})[clip_id] = value

    def defined(self, system: str, metric: str) -> dict:
        values = self.per_clip.get((system, metric), {})
        return {k: v for k, v in sorted(values.items()) if v is not None}

    def undefined_count(self, system: str, metric: str) -> int:
        values = self.per_clip.get((system, metric), {})
        return sum(1 for v in values.values() if v is None)

    def corpus_mean(self, system: str, metric: str):
        values = list(self.defined(system, metric).values())
        return float(np.mean(values)) if values else UNDEFINED

    def compare(self, system_a: str, system_b: str, metric: str):
        """Paired t-test over clips defined for both systems."""
        va = self.per_clip.get((system_a, metric), {})
        vb = self.per_clip.get((system_b, metric), {})
        clips = sorted(k for k in va if k in vb
                       and va[k] is not None and vb[k] is not None)
        return paired_ttest([va[k] for k in clips], [vb[k] for k in clips])
