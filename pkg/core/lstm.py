"""
LSTM layer with one weight matrix per gate acting on the concatenation
[h_prev, x_t]:

    i = sigmoid(w_i . [h_prev, x_t] + b_i)
    f = sigmoid(w_f . [h_prev, x_t] + b_f)
    o = sigmoid(w_o . [h_prev, x_t] + b_o)
    g = tanh(w_c . [h_prev, x_t] + b_c)
    c = f * c_prev + i * g
    h = o * tanh(c)

The sequence forward returns only the final hidden state. A stateful layer
keeps (h, c) per batch lane between calls until reset_state().
"""

from typing import Dict, List, Optional, Tuple

import numpy as np

from core.activations import sigmoid
from core.errors import ShapeError, StateError
from core.layers import Cache, Grads, Mode, glorot_uniform
from core.tensor import Rng, Tensor


GATES = ("i", "f", "o", "c")


class LstmLayer:

    def __init__(self, input_size: int, hidden_size: int, stateful: bool = False,
                 rng: Optional[Rng] = None, forget_bias: float = 1.0):
        if input_size < 1 or hidden_size < 1:
            raise ShapeError(f"lstm needs D, H >= 1, got D={input_size} H={hidden_size}")
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.stateful = stateful
        width = hidden_size + input_size
        self.weights: Dict[str, Tensor] = {}
        self.biases: Dict[str, Tensor] = {}
        for gate in GATES:
            if rng is None:
                self.weights[gate] = np.zeros((hidden_size, width))
            else:
                self.weights[gate] = glorot_uniform(rng, (hidden_size, width), width, hidden_size)
            self.biases[gate] = np.zeros(hidden_size)
        self.biases["f"].fill(forget_bias)
        self.state: Optional[Tuple[Tensor, Tensor]] = None

    def params(self) -> Dict[str, Tensor]:
        named = {}
        for gate in GATES:
            named[f"w_{gate}"] = self.weights[gate]
        for gate in GATES:
            named[f"b_{gate}"] = self.biases[gate]
        return named

    def reset_state(self):
        self.state = None

    def zero_state(self, batch: int) -> Tuple[Tensor, Tensor]:
        return np.zeros((batch, self.hidden_size)), np.zeros((batch, self.hidden_size))

    def cell_forward(self, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> Tuple[Tensor, Tensor, Cache]:
        batch = x_t.shape[0]
        if x_t.shape != (batch, self.input_size):
            raise ShapeError(f"lstm cell expects x_t [batch, {self.input_size}], got {list(x_t.shape)}")
        if h_prev.shape != (batch, self.hidden_size) or c_prev.shape != (batch, self.hidden_size):
            raise ShapeError(f"lstm cell state must be [{batch}, {self.hidden_size}], "
                             f"got h {list(h_prev.shape)} c {list(c_prev.shape)}")
        z = np.concatenate([h_prev, x_t], axis=1)
        i = sigmoid(z @ self.weights["i"].T + self.biases["i"])
        f = sigmoid(z @ self.weights["f"].T + self.biases["f"])
        o = sigmoid(z @ self.weights["o"].T + self.biases["o"])
        g = np.tanh(z @ self.weights["c"].T + self.biases["c"])
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        cache = {"z": z, "i": i, "f": f, "o": o, "g": g, "c_prev": c_prev, "tanh_c": tanh_c}
        return h, c, cache

    def cell_backward(self, cache: Cache, d_h: Tensor, d_c: Tensor,
                      grads: Grads) -> Tuple[Tensor, Tensor, Tensor]:
        """Backprop one step; accumulates into grads, returns (d_x_t, d_h_prev, d_c_prev)"""
        i, f, o, g = cache["i"], cache["f"], cache["o"], cache["g"]
        tanh_c = cache["tanh_c"]
        d_o = d_h * tanh_c
        d_c = d_c + d_h * o * (1.0 - tanh_c * tanh_c)
        d_pre = {
            "i": d_c * g * i * (1.0 - i),
            "f": d_c * cache["c_prev"] * f * (1.0 - f),
            "o": d_o * o * (1.0 - o),
            "c": d_c * i * (1.0 - g * g),
        }
        z = cache["z"]
        d_z = np.zeros_like(z)
        for gate in GATES:
            grads[f"w_{gate}"] += d_pre[gate].T @ z
            grads[f"b_{gate}"] += d_pre[gate].sum(axis=0)
            d_z += d_pre[gate] @ self.weights[gate]
        hidden = self.hidden_size
        return d_z[:, hidden:], d_z[:, :hidden], d_c * f

    def forward(self, x: Tensor, mode: Mode = Mode.INFERENCE,
                initial: Optional[Tuple[Tensor, Tensor]] = None) -> Tuple[Tensor, Cache]:
        """Run the sequence [batch, T, D] and return (h_T, cache)"""
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(f"lstm expects [batch, T, {self.input_size}], got {list(x.shape)}")
        batch, steps, _ = x.shape
        if steps < 1:
            raise ShapeError("lstm needs at least one time step")
        if initial is not None:
            h, c = initial
        elif self.stateful and self.state is not None:
            h, c = self.state
            if h.shape[0] != batch:
                raise ShapeError(f"stateful lstm carries {h.shape[0]} batch lanes, got a batch of {batch}; "
                                 "reset the state before changing the batch size")
        else:
            h, c = self.zero_state(batch)
        h0, c0 = h, c
        step_caches: List[Cache] = []
        for t in range(steps):
            h, c, step_cache = self.cell_forward(x[:, t, :], h, c)
            step_caches.append(step_cache)
        if self.stateful and mode is not Mode.CHECK:
            self.state = (h.copy(), c.copy())
        return h, {"steps": step_caches, "x_shape": x.shape, "h0": h0, "c0": c0}

    def backward(self, cache: Cache, d_h_last: Tensor) -> Tuple[Tensor, Grads, Tensor, Tensor]:
        """Backpropagation through time; returns (d_x, grads, d_h0, d_c0)"""
        if not cache or "steps" not in cache:
            raise StateError("lstm backward called without a forward cache")
        batch, steps, _ = cache["x_shape"]
        if d_h_last.shape != (batch, self.hidden_size):
            raise ShapeError(f"lstm backward expects d_h [{batch}, {self.hidden_size}], "
                             f"got {list(d_h_last.shape)}")
        grads = {name: np.zeros_like(p) for name, p in self.params().items()}
        d_x = np.zeros(cache["x_shape"])
        d_h = d_h_last
        d_c = np.zeros((batch, self.hidden_size))
        for t in reversed(range(steps)):
            d_x[:, t, :], d_h, d_c = self.cell_backward(cache["steps"][t], d_h, d_c, grads)
        return d_x, grads, d_h, d_c
