import numpy as np
import pytest

from prosodiff.autodiff import ShapeError
from prosodiff.predictor import (DatasetError, ProsodyInputs,
                                 ProsodyPredictor, assemble_conditioning,
                                 predict_prosody, train_predictor)


def make_inputs(rng, n_frames=10, d_s=4, d_o=3, d_c=5):
    return ProsodyInputs(rng.standard_normal(d_s), rng.standard_normal(d_o),
                         rng.standard_normal((n_frames, d_c)))


def test_assemble_shape_and_layout():
    rng = np.random.default_rng(0)
    inputs = make_inputs(rng, n_frames=10, d_s=4, d_o=3, d_c=5)
    out = assemble_conditioning(inputs, 4, 3, 5)
    assert out.shape == (10, 12)
    # every row repeats s then o, then carries that frame's content vector
    for t in range(10):
        assert np.array_equal(out[t, :4], inputs.s)
        assert np.array_equal(out[t, 4:7], inputs.o)
        assert np.array_equal(out[t, 7:], inputs.c[t])


def test_assemble_inverse_slices():
    rng = np.random.default_rng(1)
    inputs = make_inputs(rng)
    out = assemble_conditioning(inputs, 4, 3, 5)
    assert np.array_equal(out[:, 7:], inputs.c)
    # the broadcast s / o blocks are constant across frames
    assert np.unique(out[:, :4], axis=0).shape == (1, 4)
    assert np.unique(out[:, 4:7], axis=0).shape == (1, 3)


def test_assemble_rejects_wrong_dims():
    rng = np.random.default_rng(2)
    inputs = make_inputs(rng)
    with pytest.raises(ShapeError):
        assemble_conditioning(inputs, 5, 3, 5)
    with pytest.raises(ShapeError):
        assemble_conditioning(inputs, 4, 3, 6)


def test_forward_output_shapes():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=0)
    rng = np.random.default_rng(3)
    single = pred.forward(rng.standard_normal((10, 12)))
    batched = pred.forward(rng.standard_normal((2, 10, 12)))
    assert single.shape == (10,)
    assert batched.shape == (2, 10)


def test_zero_head_outputs_zero():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=0)
    rng = np.random.default_rng(4)
    out = pred.predict(make_inputs(rng))
    assert np.array_equal(out, np.zeros(10))


def test_single_frame_input_supported():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=0)
    rng = np.random.default_rng(5)
    out = pred.predict(make_inputs(rng, n_frames=1))
    assert out.shape == (1,)


def test_predict_is_deterministic():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=0)
    rng = np.random.default_rng(6)
    inputs = make_inputs(rng)
    assert np.array_equal(pred.predict(inputs), pred.predict(inputs))


def test_overfits_single_clip():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=1)
    rng = np.random.default_rng(7)
    inputs = make_inputs(rng, n_frames=8)
    target = np.sin(np.arange(8.0))
    train_predictor(pred, [(inputs, target)], steps=400, batch_size=1,
                    rng=np.random.default_rng(8), lr=5e-3)
    mse = float(np.mean((pred.predict(inputs) - target) ** 2))
    assert mse < 1e-3


def test_beats_constant_baseline_on_learnable_dataset():
    rng = np.random.default_rng(9)
    dataset = []
    for _ in range(12):
        inputs = make_inputs(rng, n_frames=6)
        # target depends linearly on the first content channel
        dataset.append((inputs, 2.0 * inputs.c[:, 0]))
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=2)
    train_predictor(pred, dataset, steps=500, batch_size=6,
                    rng=np.random.default_rng(10), lr=3e-3)
    all_targets = np.concatenate([t for _, t in dataset])
    baseline = float(np.mean((all_targets - all_targets.mean()) ** 2))
    mse = float(np.mean([np.mean((pred.predict(i) - t) ** 2)
                         for i, t in dataset]))
    assert mse < 0.5 * baseline


def test_heads_train_independently():
    rng = np.random.default_rng(11)
    inputs = make_inputs(rng, n_frames=6)
    pitch = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=3)
    energy = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=3)
    before = energy.state_dict()
    train_predictor(pitch, [(inputs, np.ones(6))], steps=50, batch_size=1,
                    rng=np.random.default_rng(12))
    after = energy.state_dict()
    for key in before:
        assert np.array_equal(before[key], after[key])
    out = predict_prosody(pitch, energy, inputs)
    assert not np.array_equal(out.pitch_hat, out.energy_hat)


def test_variable_length_clips_trainable():
    rng = np.random.default_rng(13)
    dataset = [(make_inputs(rng, n_frames=n), np.zeros(n))
               for n in (3, 7, 12)]
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=4)
    history = train_predictor(pred, dataset, steps=5, batch_size=2,
                              rng=np.random.default_rng(14))
    assert len(history) == 5
    assert all(np.isfinite(history))


def test_length_spot_checks():
    pred = ProsodyPredictor(2, 2, 2, model_dim=8, heads=2, blocks=1, seed=5)
    rng = np.random.default_rng(15)
    for n in (1, 2, 33, 512):
        out = pred.predict(make_inputs(rng, n_frames=n, d_s=2, d_o=2, d_c=2))
        assert out.shape == (n,)


def test_empty_dataset_rejected():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1)
    with pytest.raises(DatasetError):
        train_predictor(pred, [], steps=1, batch_size=1,
                        rng=np.random.default_rng(0))


def test_misaligned_target_rejected():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1)
    rng = np.random.default_rng(16)
    dataset = [(make_inputs(rng, n_frames=6), np.zeros(7))]
    with pytest.raises(DatasetError):
        train_predictor(pred, dataset, steps=1, batch_size=1,
                        rng=np.random.default_rng(0))


def test_full_batch_loss_nonincreasing_overall():
    rng = np.random.default_rng(17)
    dataset = [(make_inputs(rng, n_frames=5), rng.standard_normal(5))
               for _ in range(4)]
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=6)
    history = train_predictor(pred, dataset, steps=200, batch_size=4,
                              rng=np.random.default_rng(18), lr=2e-3)
    assert np.mean(history[-20:]) < np.mean(history[:20])


def test_meta_roundtrip():
    pred = ProsodyPredictor(4, 3, 5, model_dim=16, heads=2, blocks=1, seed=7)
    clone = ProsodyPredictor.from_meta(pred.meta())
    clone.load_state_dict(pred.state_dict())
    inputs = make_inputs(np.random.default_rng(19))
    assert np.array_equal(pred.predict(inputs), clone.predict(inputs))
