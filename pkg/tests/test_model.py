import numpy as np
import pytest

from core.activations import Activation
from core.errors import ConfigError, ShapeError, StateError
from core.layers import DenseLayer, Mode
from core.model import CrnnConfig, CrnnModel, build, param_count, predict
from core.tensor import Rng


def _ims_config(**overrides):
    values = dict(in_channels=8, window_len=150, num_classes=4)
    values.update(overrides)
    return CrnnConfig(**values)


class TestConfig:

    def test_ims_shape_chain(self):
        chain = dict(_ims_config().shape_chain())
        assert chain == {"input": (150, 8), "conv1d": (67, 84), "maxpool1d": (8, 84), "lstm": (24,), "dense": (4,)}

    def test_cwru_shape_chain(self):
        chain = dict(CrnnConfig(in_channels=1, window_len=205, num_classes=6).shape_chain())
        assert chain["conv1d"] == (122, 84)
        assert chain["maxpool1d"] == (15, 84)
        assert chain["dense"] == (6,)

    def test_window_shorter_than_kernel(self):
        with pytest.raises(ShapeError, match="conv1d"):
            _ims_config(window_len=50).validate()

    def test_pool_longer_than_conv_output(self):
        with pytest.raises(ShapeError, match="maxpool1d"):
            _ims_config(window_len=90, pool_size=8).validate()

    @pytest.mark.parametrize("overrides", [{"lstm_units": 0}, {"dropout1": 1.0}, {"conv_activation": "softmax"}])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            _ims_config(**overrides).validate()

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError, match="filters"):
            CrnnConfig.from_dict({"in_channels": 1, "window_len": 100, "num_classes": 2, "filters": 3})

    def test_dict_round_trip(self, toy_config):
        assert CrnnConfig.from_dict(toy_config.to_dict()) == toy_config


class TestParameters:

    def test_ims_parameter_count(self):
        model = build(_ims_config(), Rng(0))
        trainable, fixed = param_count(model)
        assert trainable == 67264
        assert fixed == 168
        rows = {row.layer: row.trainable for row in model.param_table()}
        assert rows["conv1d"] == 56532
        assert rows["lstm"] == 10464
        assert rows["dense"] == 100
        assert "67264" in model.summary()

    def test_dense_toy_count(self):
        layer = DenseLayer(2, 3, Activation.SIGMOID)
        assert sum(t.size for t in layer.params().values()) == 9

    def test_same_seed_same_weights(self, toy_config):
        a = build(toy_config, Rng(4)).params()
        b = build(toy_config, Rng(4)).params()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_initial_biases(self, toy_config):
        params = build(toy_config, Rng(0)).params()
        np.testing.assert_array_equal(params["lstm.b_f"], np.ones(3))
        assert not params["lstm.b_i"].any() and not params["conv.b"].any() and not params["dense.b"].any()


class TestForward:

    def test_scores_in_unit_interval(self, toy_config, rng):
        model = build(toy_config, rng)
        scores = model.forward(rng.normal((5, 20, 2)))
        assert scores.shape == (5, 4)
        assert np.all((scores > 0) & (scores < 1))

    def test_input_shape_checked(self, toy_config, rng):
        model = build(toy_config, rng)
        with pytest.raises(ShapeError):
            model.forward(rng.normal((5, 21, 2)))

    def test_stage_composition(self, toy_config, rng):
        model = build(toy_config, rng)
        x = rng.normal((3, 20, 2))
        out, _ = model.conv.forward(x, Mode.INFERENCE)
        n, length, filters = out.shape
        out = model.bn.forward(out.reshape(n * length, filters), Mode.INFERENCE)[0].reshape(n, length, filters)
        out, _ = model.pool.forward(out, Mode.INFERENCE)
        out, _ = model.lstm.forward(out, Mode.INFERENCE)
        expected, _ = model.dense.forward(out, Mode.INFERENCE)
        np.testing.assert_array_equal(model.forward(x), expected)

    def test_batch_permutation_equivariance(self, toy_config, rng):
        model = build(toy_config, rng)
        x = rng.normal((6, 20, 2))
        perm = rng.permutation(6)
        np.testing.assert_allclose(model.forward(x[perm]), model.forward(x)[perm], atol=1e-12)

    def test_chunked_prediction_matches(self, toy_config, rng):
        model = build(toy_config, rng)
        x = rng.normal((8, 20, 2))
        np.testing.assert_allclose(model.predict_scores(x, 2), model.predict_scores(x), atol=1e-12)

    def test_argmax_ties_go_to_lower_class(self, toy_config, rng):
        model = build(toy_config, rng)
        model.dense.w[...] = 0.0
        model.dense.b[...] = [0.0, 0.3, 0.3, 0.0]
        np.testing.assert_array_equal(predict(model, rng.normal((3, 20, 2))), [1, 1, 1])
        model.dense.b[...] = 0.0
        np.testing.assert_array_equal(predict(model, rng.normal((3, 20, 2))), [0, 0, 0])

    def test_backward_needs_train_forward(self, toy_config, rng):
        model = build(toy_config, rng)
        model.forward(rng.normal((2, 20, 2)))
        with pytest.raises(StateError):
            model.backward(np.ones((2, 4)))

    def test_backward_covers_every_parameter(self, toy_config, rng):
        model = build(toy_config, rng)
        scores = model.forward(rng.normal((4, 20, 2)), Mode.TRAIN, rng)
        grads = model.backward(np.ones_like(scores))
        assert set(grads) == set(model.params())
        for name, grad in grads.items():
            assert grad.shape == model.params()[name].shape

    def test_stateful_prediction_needs_divisible_count(self, toy_config, rng):
        toy_config.lstm_stateful = True
        model = CrnnModel(toy_config, rng)
        with pytest.raises(ShapeError):
            model.predict_scores(rng.normal((5, 20, 2)), 2)
