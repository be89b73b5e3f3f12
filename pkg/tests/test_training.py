"""Tests for the Adam optimizer, MSE loss, and the training loop."""

import numpy as np
import pytest

from nfce.channel import ArrayConfig, ScenarioSpec, sample_channels
from nfce.model import ModelConfig, build_model, model_forward
from nfce.training import (
    AdamState,
    NonFiniteLossError,
    TrainConfig,
    adam_step,
    mse_loss,
    train,
)


class TestMseLoss:
    def test_known_value(self):
        pred = np.array([1.0, 2.0, 3.0])
        target = np.array([1.0, 0.0, 0.0])
        loss, grad = mse_loss(pred, target)
        # (0 + 4 + 9) / 3
        assert loss == pytest.approx(13.0 / 3.0)
        np.testing.assert_allclose(grad, (2.0 / 3.0) * np.array([0.0, 2.0, 3.0]))

    def test_zero_at_match(self):
        x = np.random.default_rng(0).standard_normal((4, 5))
        loss, grad = mse_loss(x, x.copy())
        assert loss == 0.0
        assert not grad.any()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        pred = rng.standard_normal((3, 4))
        target = rng.standard_normal((3, 4))
        _, grad = mse_loss(pred, target)
        step = 1e-6
        for idx in [(0, 0), (1, 2), (2, 3)]:
            bump = pred.copy()
            bump[idx] += step
            up, _ = mse_loss(bump, target)
            bump[idx] -= 2 * step
            down, _ = mse_loss(bump, target)
            numeric = (up - down) / (2 * step)
            assert abs(numeric - grad[idx]) < 1e-8, f"mse grad off at {idx}"

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros(3), np.zeros(4))


class TestAdam:
    def params(self, rng):
        return {
            "a": rng.standard_normal((2, 3)).astype(np.float32),
            "b": rng.standard_normal(4).astype(np.float32),
        }

    def test_first_step_is_signed_lr(self):
        # After one update the bias-corrected ratio m_hat/sqrt(v_hat) is
        # g/|g|, so each entry moves by ~lr in the direction opposing g.
        rng = np.random.default_rng(2)
        params = self.params(rng)
        before = {k: p.copy() for k, p in params.items()}
        grads = {k: rng.standard_normal(p.shape).astype(np.float32) + 3.0
                 for k, p in params.items()}
        state = AdamState.initialize(params)
        assert adam_step(state, params, grads, lr=0.01)
        for k in params:
            steps = before[k] - params[k]
            np.testing.assert_allclose(steps, 0.01 * np.sign(grads[k]), rtol=1e-4)

    def test_zero_gradient_is_fixed_point(self):
        rng = np.random.default_rng(3)
        params = self.params(rng)
        before = {k: p.copy() for k, p in params.items()}
        grads = {k: np.zeros_like(p) for k, p in params.items()}
        state = AdamState.initialize(params)
        for _ in range(5):
            adam_step(state, params, grads, lr=0.5)
        for k in params:
            np.testing.assert_array_equal(params[k], before[k])

    def test_groups_update_independently(self):
        rng = np.random.default_rng(4)
        params = self.params(rng)
        before_b = params["b"].copy()
        grads = {"a": np.ones_like(params["a"]), "b": np.zeros_like(params["b"])}
        state = AdamState.initialize(params)
        adam_step(state, params, grads)
        assert not np.array_equal(params["a"], params["a"] * 0 + before_b.mean())
        np.testing.assert_array_equal(params["b"], before_b)

    def test_lr_zero_changes_nothing(self):
        rng = np.random.default_rng(5)
        params = self.params(rng)
        before = {k: p.copy() for k, p in params.items()}
        grads = {k: rng.standard_normal(p.shape) for k, p in params.items()}
        state = AdamState.initialize(params)
        assert adam_step(state, params, grads, lr=0.0)
        assert state.t == 1
        for k in params:
            np.testing.assert_array_equal(params[k], before[k])

    def test_nonfinite_gradient_skips_update(self):
        rng = np.random.default_rng(6)
        params = self.params(rng)
        before = {k: p.copy() for k, p in params.items()}
        grads = {k: rng.standard_normal(p.shape) for k, p in params.items()}
        grads["a"][0, 0] = np.nan
        state = AdamState.initialize(params)
        assert not adam_step(state, params, grads)
        assert state.t == 0
        assert state.skipped == 1
        for k in params:
            np.testing.assert_array_equal(params[k], before[k])
            assert not state.m[k].any(), "moments must stay untouched on skip"

    def test_converges_on_quadratic(self):
        # min (p - 3)^2, single scalar parameter
        params = {"p": np.array([0.0])}
        state = AdamState.initialize(params)
        for _ in range(2000):
            grads = {"p": 2.0 * (params["p"] - 3.0)}
            adam_step(state, params, grads, lr=0.05)
        assert abs(params["p"][0] - 3.0) < 1e-3


class TestTrainConfig:
    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, batch_size=1)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, learning_rate=-1e-3)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, train_snrs_db=())
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, precision="f16")
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, val_fraction=1.0)

    def test_dtype_property(self):
        assert TrainConfig(epochs=1).dtype is np.float32
        assert TrainConfig(epochs=1, precision="f64").dtype is np.float64


def tiny_dataset(num=96, seed=11):
    cfg = ArrayConfig(num_antennas=16, wavelength=0.01)
    spec = ScenarioSpec(far_paths=2, near_paths=1)
    return np.stack([c.h for c in sample_channels(cfg, spec, seed, num)])


class TestTrainLoop:
    def test_loss_drops_on_small_problem(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=8, body_depth=1)
        model = build_model(cfg, init_seed=7)
        tcfg = TrainConfig(epochs=8, batch_size=16, seed=3, learning_rate=2e-3)
        model, history = train(model, tiny_dataset(), tcfg)
        assert len(history) == 8
        first, last = history[0][1], history[-1][1]
        assert last < 0.5 * first, f"train mse {first} -> {last}, expected >=50% drop"

    def test_history_rows_are_epoch_train_val(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1,
                          variant="cnn_only")
        model = build_model(cfg, init_seed=0)
        _, history = train(model, tiny_dataset(48), TrainConfig(epochs=2, batch_size=16))
        assert [row[0] for row in history] == [1, 2]
        for _, train_mse, val_mse in history:
            assert np.isfinite(train_mse) and np.isfinite(val_mse)

    def test_deterministic_given_seed(self):
        # f64 so accumulation order is the only possible wobble, and the
        # loop is sequential, so histories must match exactly.
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        tcfg = TrainConfig(epochs=3, batch_size=16, seed=9, precision="f64")
        runs = []
        for _ in range(2):
            model = build_model(cfg, init_seed=5, dtype=np.float64)
            _, history = train(model, tiny_dataset(), tcfg)
            runs.append(history)
        assert runs[0] == runs[1]

    def test_different_seed_changes_history(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        histories = []
        for seed in (0, 1):
            model = build_model(cfg, init_seed=5)
            _, history = train(
                model, tiny_dataset(), TrainConfig(epochs=1, batch_size=16, seed=seed)
            )
            histories.append(history)
        assert histories[0] != histories[1]

    def test_training_meta_filled(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        model = build_model(cfg, init_seed=1)
        model, history = train(
            model, tiny_dataset(64), TrainConfig(epochs=1, batch_size=16, seed=4)
        )
        meta = model.training_meta
        assert meta["epochs"] == 1
        assert meta["seed"] == 4
        assert meta["num_train_samples"] + meta["num_val_samples"] == 64
        assert meta["final_train_mse"] == history[-1][1]
        assert meta["adam_skipped"] == 0

    def test_accepts_realization_list(self):
        acfg = ArrayConfig(num_antennas=16, wavelength=0.01)
        spec = ScenarioSpec(far_paths=1, near_paths=1)
        chans = sample_channels(acfg, spec, 2, 32)
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        model = build_model(cfg, init_seed=1)
        _, history = train(model, chans, TrainConfig(epochs=1, batch_size=8))
        assert len(history) == 1

    def test_wrong_channel_length_rejected(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        model = build_model(cfg, init_seed=1)
        bad = np.zeros((8, 9), dtype=np.complex128)  # 9 != 16 antennas
        with pytest.raises(ValueError):
            train(model, bad, TrainConfig(epochs=1, batch_size=4))

    def test_nonfinite_loss_raises_with_location(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        model = build_model(cfg, init_seed=1)
        model.tail.bias[:] = np.inf
        with pytest.raises(NonFiniteLossError) as excinfo:
            train(model, tiny_dataset(48), TrainConfig(epochs=1, batch_size=16))
        assert excinfo.value.epoch == 1
        assert excinfo.value.batch == 0

    def test_model_left_in_train_mode_with_updated_stats(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        model = build_model(cfg, init_seed=1)
        train(model, tiny_dataset(48), TrainConfig(epochs=1, batch_size=16))
        assert not model.is_eval
        # running stats must have moved off their init values
        assert model.body[0].bn.running_var.std() > 0 or (
            model.body[0].bn.running_mean.any()
        )

    def test_eval_after_training_runs(self):
        cfg = ModelConfig(image_height=4, image_width=4, width=4, body_depth=1)
        model = build_model(cfg, init_seed=1)
        model, _ = train(model, tiny_dataset(48), TrainConfig(epochs=1, batch_size=16))
        model.eval_mode()
        x = np.random.default_rng(0).standard_normal((2, 2, 4, 4)).astype(np.float32)
        noise_hat, _ = model_forward(model, x)
        assert noise_hat.shape == x.shape
