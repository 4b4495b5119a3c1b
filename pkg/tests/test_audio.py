import numpy as np
import pytest
from scipy.io import wavfile

from prosodiff.audio import (IngestionError, NormalizationError, Waveform,
                             read_wav, speaker_normalize, write_wav)


def test_pcm16_roundtrip_silence(tmp_path):
    path = tmp_path / "silence.wav"
    write_wav(path, Waveform(np.zeros(1600)))
    wav = read_wav(path)
    assert wav.sample_rate == 16000
    assert np.array_equal(wav.samples, np.zeros(1600))


def test_pcm16_full_scale_value(tmp_path):
    path = tmp_path / "full.wav"
    write_wav(path, Waveform(np.ones(100)))
    wav = read_wav(path)
    assert np.allclose(wav.samples, 32767.0 / 32768.0, atol=0)


def test_float32_passthrough(tmp_path):
    path = tmp_path / "f32.wav"
    data = np.linspace(-0.5, 0.5, 50, dtype=np.float32)
    wavfile.write(path, 16000, data)
    wav = read_wav(path)
    assert np.array_equal(wav.samples, data.astype(np.float64))


def test_wrong_sample_rate_rejected(tmp_path):
    path = tmp_path / "rate.wav"
    wavfile.write(path, 8000, np.zeros(100, dtype=np.int16))
    with pytest.raises(IngestionError, match="sample rate"):
        read_wav(path)


def test_stereo_rejected(tmp_path):
    path = tmp_path / "stereo.wav"
    wavfile.write(path, 16000, np.zeros((100, 2), dtype=np.int16))
    with pytest.raises(IngestionError, match="mono"):
        read_wav(path)


def test_unsupported_encoding_rejected(tmp_path):
    path = tmp_path / "enc.wav"
    wavfile.write(path, 16000, np.zeros(100, dtype=np.int32))
    with pytest.raises(IngestionError, match="encoding"):
        read_wav(path)


def test_clip_id_defaults_to_stem(tmp_path):
    path = tmp_path / "clip007.wav"
    write_wav(path, Waveform(np.zeros(100)))
    assert read_wav(path).clip_id == "clip007"


def _clips():
    return [
        Waveform(np.array([0.1, -0.4, 0.2]), speaker_id="a", clip_id="a0"),
        Waveform(np.array([0.05, 0.8]), speaker_id="a", clip_id="a1"),
        Waveform(np.array([-0.25, 0.1]), speaker_id="b", clip_id="b0"),
    ]


def test_speaker_normalize_divides_by_group_peak():
    out = speaker_normalize(_clips())
    assert np.array_equal(out[0].samples, np.array([0.1, -0.4, 0.2]) / 0.8)
    assert np.array_equal(out[1].samples, np.array([0.05, 0.8]) / 0.8)
    assert np.array_equal(out[2].samples, np.array([-0.25, 0.1]) / 0.25)


def test_speaker_normalize_brute_force_peak_oracle():
    rng = np.random.default_rng(0)
    clips = [Waveform(rng.standard_normal(200) * rng.uniform(0.1, 2.0),
                      speaker_id=f"s{i % 3}", clip_id=str(i))
             for i in range(9)]
    out = speaker_normalize(clips)
    for spk in ("s0", "s1", "s2"):
        peak = max(np.abs(c.samples).max() for c in clips
                   if c.speaker_id == spk)
        for before, after in zip(clips, out):
            if before.speaker_id == spk:
                assert np.array_equal(after.samples, before.samples / peak)


def test_speaker_normalize_peak_is_one_and_idempotent():
    out = speaker_normalize(_clips())
    for spk in ("a", "b"):
        peak = max(np.abs(c.samples).max() for c in out if c.speaker_id == spk)
        assert abs(peak - 1.0) < 1e-12
    again = speaker_normalize(out)
    for first, second in zip(out, again):
        assert np.allclose(first.samples, second.samples, atol=1e-12, rtol=0)


def test_speaker_normalize_preserves_ratios_exactly():
    clips = _clips()
    out = speaker_normalize(clips)
    ratio_before = clips[0].samples[0] / clips[1].samples[1]
    ratio_after = out[0].samples[0] / out[1].samples[1]
    assert ratio_before == ratio_after


def test_speaker_normalize_keeps_metadata():
    out = speaker_normalize(_clips())
    assert [c.clip_id for c in out] == ["a0", "a1", "b0"]
    assert [c.speaker_id for c in out] == ["a", "a", "b"]


def test_all_silent_speaker_rejected():
    clips = [Waveform(np.zeros(10), speaker_id="quiet", clip_id="q0"),
             Waveform(np.zeros(5), speaker_id="quiet", clip_id="q1")]
    with pytest.raises(NormalizationError, match="quiet"):
        speaker_normalize(clips)
