"""Synthetic corpus generation.

Each clip is a harmonic source whose pitch and energy contours are a
deterministic function of the speaker embedding, the clip's emotion vector,
and the content sequence:

    pitch (octaves rel. 55 Hz):
        p(t) = log2(base_f0 / 55)
             + A(o) * [sin(2*pi*rate(o)*t + phase(o)) - time mean]
             + 0.06 * (c_t . v_pitch)
        A(o)     = f0_range * (0.4 + 0.6 * sigmoid(2 o.u_amp))
        rate(o)  = 1.0 + 1.5 * sigmoid(2 o.u_rate)      [Hz]
        phase(o) = pi * (o.u_phase)

    energy envelope (linear amplitude):
        env(t) = gain * (0.55 + 0.35 * sin(2*pi*erate(o)*t + ephase(o)))
        erate(o)  = 0.8 + 1.2 * sigmoid(2 o.u_erate)
        ephase(o) = pi * (o.u_ephase)

The sinusoidal pitch term is re-centered per clip, so every clip of a speaker
shares the speaker's mean pitch; emotion controls the contour *shape*, which
only the prosody predictor can see at inference time. Waveforms are harmonic
stacks (amplitude 1/k, per-speaker spectral tilt) plus low-level noise, then
speaker-wise normalized. Ground-truth pitch/energy are extracted with the
regular feature pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Waveform, speaker_normalize
from .melspec import MelConfig, MelSpectrogram, log_mel, mel_filterbank
from .pitch import PitchContour, estimate_pitch
from .prosody import EnergyContour, extract_energy

D_S = 8
D_O = 4
D_C = 8
N_CLASSES = 4
NOISE_LEVEL = 0.002
S_JITTER = 0.05  # per-clip speaker-embedding jitter (random-frame emulation)


class ConfigError(ValueError):
    pass


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class SynthSpeakerProfile:
    speaker_id: str
    base_f0: float
    f0_range: float      # octaves of contour swing
    energy_gain: float
    tilt: float          # dB-like spectral slope parameter
    band_profile: np.ndarray
    s_embedding: np.ndarray


@dataclass
class ProsodyMapConstants:
    """Fixed projection vectors of the documented (s, o, c) -> prosody map."""
    u_amp: np.ndarray
    u_rate: np.ndarray
    u_phase: np.ndarray
    u_erate: np.ndarray
    u_ephase: np.ndarray
    v_pitch: np.ndarray
    class_templates: np.ndarray  # [N_CLASSES, n_frames, D_C]


@dataclass
class CorpusClip:
    clip_id: str
    speaker_id: str
    waveform: Waveform
    mel: MelSpectrogram
    gt_pitch: PitchContour
    gt_energy: EnergyContour
    s: np.ndarray
    o: np.ndarray
    c: np.ndarray
    content_class: int


@dataclass
class Corpus:
    clips: list
    profiles: dict
    constants: ProsodyMapConstants
    mel_config: MelConfig
    n_frames: int

    def by_speaker(self):
        groups: dict = {}
        for clip in self.clips:
            groups.setdefault(clip.speaker_id, []).append(clip)
        return groups


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _smooth_curves(rng: np.random.Generator, n_frames: int, dim: int,
                   seconds: float, components: int = 3) -> np.ndarray:
    """Band-limited random curves: sums of low-frequency sinusoids."""
    t = np.linspace(0.0, seconds, n_frames, endpoint=False)
    out = np.zeros((n_frames, dim))
    for d in range(dim):
        for _ in range(components):
            freq = rng.uniform(0.3, 3.0)
            phase = rng.uniform(0, 2 * np.pi)
            out[:, d] += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * freq * t + phase)
    return out / np.sqrt(components)


def clip_prosody(profile: SynthSpeakerProfile, o: np.ndarray, c: np.ndarray,
                 times: np.ndarray, constants: ProsodyMapConstants,
                 frame_rate: float = 62.5):
    """The documented deterministic map to (normalized pitch, envelope)."""
    amp = profile.f0_range * (0.4 + 0.6 * _sigmoid(2.0 * o @ constants.u_amp))
    rate = 1.0 + 1.5 * _sigmoid(2.0 * o @ constants.u_rate)
    phase = np.pi * (o @ constants.u_phase)
    shape = np.sin(2 * np.pi * rate * times + phase)
    shape = shape - shape.mean()

    # content term lives at the mel frame rate; interpolate to sample times
    content = c @ constants.v_pitch
    if len(times) != c.shape[0]:
        frame_times = np.arange(c.shape[0]) / frame_rate
        content = np.interp(times, frame_times, content)

    p_norm = np.log2(profile.base_f0 / 55.0) + amp * shape + 0.06 * content
    p_norm = np.clip(p_norm, np.log2(66.0 / 55.0), np.log2(480.0 / 55.0))

    erate = 0.8 + 1.2 * _sigmoid(2.0 * o @ constants.u_erate)
    ephase = np.pi * (o @ constants.u_ephase)
    env = profile.energy_gain * (0.55 + 0.35 * np.sin(2 * np.pi * erate * times
                                                      + ephase))
    return p_norm, env


def _synthesize(profile: SynthSpeakerProfile, o: np.ndarray, c: np.ndarray,
                seconds: float, sample_rate: int,
                constants: ProsodyMapConstants,
                rng: np.random.Generator, fmax: float,
                frame_rate: float) -> np.ndarray:
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    p_norm, env = clip_prosody(profile, o, c, t, constants,
                               frame_rate=frame_rate)
    f0 = 55.0 * np.exp2(p_norm)
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    kmax = max(1, min(10, int((fmax * 0.95) // float(f0.max()))))
    signal = np.zeros(n)
    for k in range(1, kmax + 1):
        tilt_gain = np.exp(profile.tilt * (k * float(np.median(f0))) / fmax)
        signal += (tilt_gain / k) * np.sin(k * phase)
    signal *= env / kmax
    signal += NOISE_LEVEL * rng.standard_normal(n)
    return signal


def generate_corpus(n_speakers: int, clips_per_speaker: int,
                    clip_seconds: float, seed: int,
                    mel_config: MelConfig | None = None) -> Corpus:
    if n_speakers < 1 or clips_per_speaker < 1:
        raise ConfigError(
            f"degenerate corpus: {n_speakers} speakers x {clips_per_speaker} clips"
        )
    mel_config = mel_config or MelConfig()
    rng = np.random.default_rng(seed)
    sr = mel_config.sample_rate
    n_samples = int(round(clip_seconds * sr))
    n_frames = n_samples // mel_config.hop_length + 1

    constants = ProsodyMapConstants(
        u_amp=_unit(rng, D_O), u_rate=_unit(rng, D_O), u_phase=_unit(rng, D_O),
        u_erate=_unit(rng, D_O), u_ephase=_unit(rng, D_O),
        v_pitch=_unit(rng, D_C),
        class_templates=np.stack([
            _smooth_curves(rng, n_frames, D_C, clip_seconds)
            for _ in range(N_CLASSES)
        ]),
    )

    fb = mel_filterbank(mel_config.n_fft, mel_config.n_mels, sr,
                        mel_config.fmin, mel_config.fmax)
    profiles = {}
    for i in range(n_speakers):
        speaker_id = f"spk{i:02d}"
        base_f0 = float(np.exp(rng.uniform(np.log(110.0), np.log(280.0))))
        tilt = rng.uniform(-1.5, 0.0)
        profiles[speaker_id] = SynthSpeakerProfile(
            speaker_id=speaker_id,
            base_f0=base_f0,
            f0_range=rng.uniform(0.15, 0.30),
            energy_gain=rng.uniform(0.45, 1.0),
            tilt=tilt,
            band_profile=np.exp(tilt * fb.centers_hz / mel_config.fmax),
            s_embedding=_unit(rng, D_S),
        )

    raw_clips = []
    meta = []
    for speaker_id, profile in profiles.items():
        for j in range(clips_per_speaker):
            clip_id = f"{speaker_id}_c{j:03d}"
            o = rng.uniform(-1.0, 1.0, D_O)
            content_class = int(rng.integers(0, N_CLASSES))
            c = constants.class_templates[content_class] \
                + 0.3 * _smooth_curves(rng, n_frames, D_C, clip_seconds)
            s = profile.s_embedding + S_JITTER * rng.standard_normal(D_S)
            samples = _synthesize(profile, o, c, clip_seconds, sr, constants,
                                  rng, mel_config.fmax,
                                  frame_rate=mel_config.frame_rate)
            raw_clips.append(Waveform(samples, sr, speaker_id=speaker_id,
                                      clip_id=clip_id))
            meta.append((clip_id, speaker_id, s, o, c, content_class))

    normalized = speaker_normalize(raw_clips)

    clips = []
    for wav, (clip_id, speaker_id, s, o, c, content_class) in zip(normalized,
                                                                  meta):
        mel = log_mel(wav, mel_config)
        clips.append(CorpusClip(
            clip_id=clip_id,
            speaker_id=speaker_id,
            waveform=wav,
            mel=mel,
            gt_pitch=estimate_pitch(wav, hop_length=mel_config.hop_length),
            gt_energy=extract_energy(mel),
            s=s, o=o, c=c,
            content_class=content_class,
        ))
    return Corpus(clips, profiles, constants, mel_config, n_frames)
