import numpy as np
import pytest

from prosodiff.config import ExperimentConfig
from prosodiff.experiment import (OrchestrationError, derived_seed,
                                  load_corpus, reduce_mel, run_experiment,
                                  split_clips, stage_evaluate,
                                  stage_synthdata)


def tiny_config(**overrides):
    base = dict(n_speakers=2, clips_per_speaker=6, test_clips_per_speaker=2,
                clip_seconds=1.0, T=50, diffusion_steps=25,
                classifier_steps=10, predictor_steps=15, batch_size=4,
                model_dim=32, heads=2, attention_blocks=1)
    base.update(overrides)
    return ExperimentConfig(**base)


def test_derived_seed_is_stable_and_tag_separated():
    assert derived_seed(0, 11) == derived_seed(0, 11)
    assert derived_seed(0, 11) != derived_seed(0, 12)
    assert derived_seed(0, 11, 1) != derived_seed(0, 11, 2)
    assert derived_seed(1, 11) != derived_seed(0, 11)


def test_reduce_mel_band_averaging():
    frames = np.arange(12.0).reshape(2, 6)
    out = reduce_mel(frames, 2)
    assert np.array_equal(out, [[0.5, 2.5, 4.5], [6.5, 8.5, 10.5]])
    assert reduce_mel(frames, 1) is frames


def test_split_is_deterministic_and_disjoint():
    cfg = tiny_config()
    from prosodiff.corpus import generate_corpus
    corpus = generate_corpus(2, 6, 1.0, seed=0)
    train, test = split_clips(corpus, 2)
    train2, test2 = split_clips(corpus, 2)
    assert [c.clip_id for c in train] == [c.clip_id for c in train2]
    assert len(train) == 8 and len(test) == 4
    assert not {c.clip_id for c in train} & {c.clip_id for c in test}
    # per speaker: exactly 2 held out
    for spk in ("spk00", "spk01"):
        assert sum(1 for c in test if c.speaker_id == spk) == 2


def test_synthdata_roundtrips_through_load(tmp_path):
    cfg = tiny_config()
    corpus = stage_synthdata(cfg, tmp_path)
    loaded = load_corpus(cfg, tmp_path)
    assert [c.clip_id for c in loaded.clips] == sorted(
        c.clip_id for c in corpus.clips)
    by_id = {c.clip_id: c for c in corpus.clips}
    for clip in loaded.clips:
        src = by_id[clip.clip_id]
        assert np.array_equal(clip.o, src.o)
        assert np.array_equal(clip.c, src.c)
        assert clip.content_class == src.content_class
        # float32 WAV storage keeps samples to float32 precision
        assert np.allclose(clip.waveform.samples, src.waveform.samples,
                           atol=1e-6)


def test_load_corpus_requires_synthdata(tmp_path):
    with pytest.raises(OrchestrationError, match="synthdata"):
        load_corpus(tiny_config(), tmp_path)


def test_evaluate_requires_samples(tmp_path):
    stage_synthdata(tiny_config(), tmp_path)
    with pytest.raises(OrchestrationError):
        stage_evaluate(tiny_config(), tmp_path)


def test_run_experiment_reports_are_reproducible(tmp_path):
    cfg = tiny_config()
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run_experiment(cfg, out_a)
    run_experiment(cfg, out_b)
    for name in ("metrics.csv", "summary.json"):
        assert (out_a / "reports" / name).read_bytes() == \
            (out_b / "reports" / name).read_bytes()


def test_run_experiment_summary_structure(tmp_path):
    summary = run_experiment(tiny_config(), tmp_path)
    assert set(summary["systems"]) == {"none", "predicted", "oracle"}
    assert "none_vs_oracle" in summary["p_values"]
    for system in summary["systems"]:
        for metric in ("gf0", "lf0", "ec", "resem"):
            assert isinstance(summary["corpus_means"][system][metric], float)
