import math

import numpy as np
import pytest

from core.errors import ShapeError, StateError
from core.gradcheck import check_layer
from core.layers import Mode
from core.lstm import GATES, LstmLayer
from core.tensor import Rng


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestCell:

    def test_zero_parameters(self, rng):
        layer = LstmLayer(3, 2, forget_bias=0.0)
        x = rng.normal((4, 3))
        h0, c0 = layer.zero_state(4)
        h, c, cache = layer.cell_forward(x, h0, c0)
        assert np.all(cache["i"] == 0.5) and np.all(cache["f"] == 0.5) and np.all(cache["o"] == 0.5)
        assert not cache["g"].any() and not c.any() and not h.any()

    def test_saturated_forget_gate_keeps_cell(self, rng):
        layer = LstmLayer(2, 3, forget_bias=20.0)
        c_prev = rng.normal((1, 3))
        _, c, _ = layer.cell_forward(rng.normal((1, 2)), np.zeros((1, 3)), c_prev)
        np.testing.assert_allclose(c, c_prev, atol=1e-8)

    def test_scalar_hand_evaluation(self):
        layer = LstmLayer(1, 1, forget_bias=0.0)
        # columns are [h_prev, x_t]
        values = {"i": (0.5, -0.3, 0.1), "f": (0.2, 0.4, 0.7), "o": (-0.6, 0.9, 0.0), "c": (0.3, 0.8, -0.2)}
        for gate, (w_h, w_x, b) in values.items():
            layer.weights[gate][...] = [[w_h, w_x]]
            layer.biases[gate][...] = [b]
        x, h_prev, c_prev = 1.5, -0.4, 0.25

        def pre(gate):
            w_h, w_x, b = values[gate]
            return w_h * h_prev + w_x * x + b

        i, f, o = _sigmoid(pre("i")), _sigmoid(pre("f")), _sigmoid(pre("o"))
        g = math.tanh(pre("c"))
        c_expected = f * c_prev + i * g
        h_expected = o * math.tanh(c_expected)

        h, c, _ = layer.cell_forward(np.array([[x]]), np.array([[h_prev]]), np.array([[c_prev]]))
        assert c[0, 0] == pytest.approx(c_expected, abs=1e-14)
        assert h[0, 0] == pytest.approx(h_expected, abs=1e-14)

    def test_forget_bias_initialization(self, rng):
        layer = LstmLayer(4, 5, rng=rng)
        np.testing.assert_array_equal(layer.biases["f"], np.ones(5))
        for gate in ("i", "o", "c"):
            assert not layer.biases[gate].any()
        assert set(layer.params()) == {f"w_{g}" for g in GATES} | {f"b_{g}" for g in GATES}
        assert layer.weights["i"].shape == (5, 9)


class TestSequence:

    def test_single_step_equals_cell(self, rng):
        layer = LstmLayer(3, 4, rng=rng)
        x = rng.normal((2, 1, 3))
        h_seq, _ = layer.forward(x)
        h_cell, _, _ = layer.cell_forward(x[:, 0, :], *layer.zero_state(2))
        np.testing.assert_array_equal(h_seq, h_cell)

    def test_stateless_calls_repeat(self, rng):
        layer = LstmLayer(3, 4, rng=rng)
        x = rng.normal((2, 6, 3))
        np.testing.assert_array_equal(layer.forward(x)[0], layer.forward(x)[0])

    def test_stateful_chaining(self, rng):
        layer = LstmLayer(3, 4, stateful=True, rng=rng)
        x = rng.normal((2, 8, 3))
        whole, _ = layer.forward(x)
        layer.reset_state()
        layer.forward(x[:, :5, :])
        chained, _ = layer.forward(x[:, 5:, :])
        np.testing.assert_allclose(chained, whole, atol=1e-15)

    def test_stateful_lane_change_rejected(self, rng):
        layer = LstmLayer(2, 2, stateful=True, rng=rng)
        layer.forward(rng.normal((3, 4, 2)))
        with pytest.raises(ShapeError):
            layer.forward(rng.normal((2, 4, 2)))
        layer.reset_state()
        layer.forward(rng.normal((2, 4, 2)))

    def test_check_mode_leaves_state_alone(self, rng):
        layer = LstmLayer(2, 2, stateful=True, rng=rng)
        layer.forward(rng.normal((1, 3, 2)))
        saved = layer.state
        layer.forward(rng.normal((1, 3, 2)), Mode.CHECK)
        assert layer.state is saved


class TestBackward:

    def test_zero_upstream_gradient(self, rng):
        layer = LstmLayer(2, 3, rng=rng)
        h, cache = layer.forward(rng.normal((2, 4, 2)), Mode.TRAIN)
        d_x, grads, d_h0, d_c0 = layer.backward(cache, np.zeros_like(h))
        assert not d_x.any() and not d_h0.any() and not d_c0.any()
        assert all(not g.any() for g in grads.values())

    def test_single_step_finite_differences(self, rng):
        layer = LstmLayer(2, 3, rng=rng)
        report = check_layer(layer, rng.normal((2, 1, 2)), rng)
        assert report.max_relative_error <= 1e-5, report.render()

    def test_sequence_finite_differences(self):
        rng = Rng(11)
        layer = LstmLayer(2, 3, rng=rng)
        report = check_layer(layer, rng.normal((2, 5, 2)), rng)
        assert report.max_relative_error <= 1e-4, report.render()

    def test_initial_state_gradients(self, rng):
        layer = LstmLayer(2, 3, rng=rng)
        x = rng.normal((1, 4, 2))
        h0, c0 = rng.normal((1, 3)), rng.normal((1, 3))
        g = rng.normal((1, 3))
        _, cache = layer.forward(x, Mode.TRAIN, (h0, c0))
        _, _, d_h0, _ = layer.backward(cache, g)
        eps = 1e-6
        bumped = h0.copy()
        bumped[0, 1] += eps
        plus = np.sum(layer.forward(x, Mode.CHECK, (bumped, c0))[0] * g)
        bumped[0, 1] -= 2 * eps
        minus = np.sum(layer.forward(x, Mode.CHECK, (bumped, c0))[0] * g)
        assert d_h0[0, 1] == pytest.approx((plus - minus) / (2 * eps), rel=1e-5, abs=1e-9)

    def test_backward_without_forward(self):
        with pytest.raises(StateError):
            LstmLayer(2, 2).backward({}, np.zeros((1, 2)))
