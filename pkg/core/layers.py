"""
Feed-forward layers of the CRNN stack: valid 1D convolution, non-overlapping
max-pooling, inverted dropout, batch normalization and the dense head.

Every layer follows the same contract:
    forward(x, mode, ...) -> (out, cache)
    backward(cache, d_out) -> (d_x, grads)
where grads maps parameter names (as in params()) to gradient tensors.
Caches are returned instead of kept on the layer, so inference on a shared
layer never mutates it.
"""

from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.activations import Activation, activate, activation_backward
from core.errors import ShapeError, StateError
from core.tensor import Rng, Tensor, hadamard

Cache = Dict[str, Any]
Grads = Dict[str, Tensor]


class Mode(Enum):
    TRAIN = "train"
    INFERENCE = "inference"
    # Deterministic mode for gradient checks: dropout off, batch-norm on
    # running statistics, caches kept, recurrent carried state left alone.
    CHECK = "check"


def glorot_uniform(rng: Rng, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit)


def _require(condition: bool, message: str):
    if not condition:
        raise ShapeError(message)


class Conv1dLayer:
    """Valid (unpadded) stride-1 convolution over time: [B, T, C] -> [B, T-K+1, F]"""

    def __init__(self, in_channels: int, filters: int, kernel: int,
                 activation: Activation = Activation.ELU, rng: Optional[Rng] = None):
        _require(in_channels >= 1 and filters >= 1 and kernel >= 1,
                 f"conv1d needs C, F, K >= 1, got C={in_channels} F={filters} K={kernel}")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.activation = activation
        if rng is None:
            self.w = np.zeros((filters, in_channels, kernel))
        else:
            self.w = glorot_uniform(rng, (filters, in_channels, kernel),
                                    in_channels * kernel, filters * kernel)
        self.b = np.zeros(filters)

    def params(self) -> Dict[str, Tensor]:
        return {"w": self.w, "b": self.b}

    def output_length(self, length: int) -> int:
        return length - self.kernel + 1

    def forward(self, x: Tensor, mode: Mode = Mode.INFERENCE) -> Tuple[Tensor, Cache]:
        _require(x.ndim == 3 and x.shape[2] == self.in_channels,
                 f"conv1d expects [batch, T, {self.in_channels}], got {list(x.shape)}")
        _require(x.shape[1] >= self.kernel,
                 f"conv1d input length {x.shape[1]} shorter than kernel {self.kernel}")
        # windows[b, t, c, p] == x[b, t + p, c]
        windows = sliding_window_view(x, self.kernel, axis=1)
        z = np.einsum("btcp,fcp->btf", windows, self.w, optimize=True) + self.b
        out = activate(self.activation, z)
        return out, {"x": x, "z": z, "out": out}

    def backward(self, cache: Cache, d_out: Tensor) -> Tuple[Tensor, Grads]:
        x, z = cache["x"], cache["z"]
        _require(d_out.shape == z.shape,
                 f"conv1d backward got {list(d_out.shape)}, forward produced {list(z.shape)}")
        dz = activation_backward(self.activation, z, cache["out"], d_out)
        windows = sliding_window_view(x, self.kernel, axis=1)
        d_w = np.einsum("btf,btcp->fcp", dz, windows, optimize=True)
        d_b = dz.sum(axis=(0, 1))
        d_x = np.zeros_like(x)
        length = z.shape[1]
        for p in range(self.kernel):
            d_x[:, p:p + length, :] += dz @ self.w[:, :, p]
        return d_x, {"w": d_w, "b": d_b}


class MaxPool1dLayer:
    """Non-overlapping max-pooling over time; trailing remainder < k is dropped"""

    def __init__(self, pool_size: int):
        _require(pool_size >= 1, f"pool size must be >= 1, got {pool_size}")
        self.pool_size = pool_size

    def params(self) -> Dict[str, Tensor]:
        return {}

    def output_length(self, length: int) -> int:
        return length // self.pool_size

    def forward(self, x: Tensor, mode: Mode = Mode.INFERENCE) -> Tuple[Tensor, Cache]:
        _require(x.ndim == 3, f"maxpool1d expects [batch, T, F], got {list(x.shape)}")
        batch, length, features = x.shape
        k = self.pool_size
        _require(length >= k, f"maxpool1d input length {length} shorter than pool size {k}")
        steps = length // k
        patches = x[:, :steps * k, :].reshape(batch, steps, k, features)
        # np.argmax returns the first maximum, so ties route to the lowest index
        argmax = np.argmax(patches, axis=2)
        out = np.take_along_axis(patches, argmax[:, :, None, :], axis=2)[:, :, 0, :]
        return out, {"shape": x.shape, "argmax": argmax}

    def backward(self, cache: Cache, d_out: Tensor) -> Tuple[Tensor, Grads]:
        batch, length, features = cache["shape"]
        argmax = cache["argmax"]
        k = self.pool_size
        steps = argmax.shape[1]
        d_patches = np.zeros((batch, steps, k, features))
        np.put_along_axis(d_patches, argmax[:, :, None, :], d_out[:, :, None, :], axis=2)
        d_x = np.zeros((batch, length, features))
        d_x[:, :steps * k, :] = d_patches.reshape(batch, steps * k, features)
        return d_x, {}


class DropoutLayer:
    """Inverted dropout: kept units scaled by 1/(1-p) in training, identity otherwise"""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def params(self) -> Dict[str, Tensor]:
        return {}

    def forward(self, x: Tensor, mode: Mode = Mode.INFERENCE,
                rng: Optional[Rng] = None) -> Tuple[Tensor, Cache]:
        if mode is not Mode.TRAIN or self.rate == 0.0:
            return x, {"mask": None}
        if rng is None:
            raise StateError("dropout in train mode needs a generator")
        keep = rng.uniform(x.shape, 0.0, 1.0) >= self.rate
        mask = keep / (1.0 - self.rate)
        return hadamard(x, mask), {"mask": mask}

    def backward(self, cache: Cache, d_out: Tensor) -> Tuple[Tensor, Grads]:
        mask = cache["mask"]
        if mask is None:
            return d_out, {}
        return hadamard(d_out, mask), {}


class BatchNormLayer:
    """Per-feature batch normalization over the batch axis of a [N, features] input"""

    def __init__(self, features: int, momentum: float = 0.99, epsilon: float = 1e-5):
        _require(features >= 1, f"batch-norm needs features >= 1, got {features}")
        if epsilon <= 0:
            raise ValueError(f"batch-norm epsilon must be > 0, got {epsilon}")
        self.features = features
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = np.ones(features)
        self.beta = np.zeros(features)
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)

    def params(self) -> Dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self) -> Dict[str, Tensor]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x: Tensor, mode: Mode = Mode.INFERENCE) -> Tuple[Tensor, Cache]:
        _require(x.ndim == 2 and x.shape[1] == self.features,
                 f"batch-norm expects [N, {self.features}], got {list(x.shape)}")
        if mode is Mode.TRAIN:
            _require(x.shape[0] >= 2, f"batch-norm train mode needs batch >= 2, got {x.shape[0]}")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            # in place so references held by optimizers and checkpoints stay valid
            self.running_mean *= self.momentum
            self.running_mean += (1.0 - self.momentum) * mean
            self.running_var *= self.momentum
            self.running_var += (1.0 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = (x - mean) * inv_std
        out = self.gamma * x_hat + self.beta
        return out, {"x_hat": x_hat, "inv_std": inv_std, "batch_stats": mode is Mode.TRAIN}

    def backward(self, cache: Cache, d_out: Tensor) -> Tuple[Tensor, Grads]:
        if not cache:
            raise StateError("batch-norm backward called without a forward cache")
        x_hat, inv_std = cache["x_hat"], cache["inv_std"]
        _require(d_out.shape == x_hat.shape,
                 f"batch-norm backward got {list(d_out.shape)}, expected {list(x_hat.shape)}")
        d_beta = d_out.sum(axis=0)
        d_gamma = (d_out * x_hat).sum(axis=0)
        d_xhat = d_out * self.gamma
        if cache["batch_stats"]:
            # mean and variance depend on every sample in the batch
            n = x_hat.shape[0]
            d_x = (inv_std / n) * (n * d_xhat - d_xhat.sum(axis=0)
                                   - x_hat * (d_xhat * x_hat).sum(axis=0))
        else:
            d_x = d_xhat * inv_std
        return d_x, {"gamma": d_gamma, "beta": d_beta}


class DenseLayer:
    """Fully connected layer: [B, in] -> [B, out]"""

    def __init__(self, in_features: int, out_features: int,
                 activation: Activation = Activation.SIGMOID, rng: Optional[Rng] = None):
        _require(in_features >= 1 and out_features >= 1,
                 f"dense needs in, out >= 1, got in={in_features} out={out_features}")
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        if rng is None:
            self.w = np.zeros((out_features, in_features))
        else:
            self.w = glorot_uniform(rng, (out_features, in_features), in_features, out_features)
        self.b = np.zeros(out_features)

    def params(self) -> Dict[str, Tensor]:
        return {"w": self.w, "b": self.b}

    def forward(self, x: Tensor, mode: Mode = Mode.INFERENCE) -> Tuple[Tensor, Cache]:
        _require(x.ndim == 2 and x.shape[1] == self.in_features,
                 f"dense expects [batch, {self.in_features}], got {list(x.shape)}")
        z = x @ self.w.T + self.b
        out = activate(self.activation, z)
        return out, {"x": x, "z": z, "out": out}

    def backward(self, cache: Cache, d_out: Tensor) -> Tuple[Tensor, Grads]:
        z = cache["z"]
        _require(d_out.shape == z.shape,
                 f"dense backward got {list(d_out.shape)}, expected {list(z.shape)}")
        dz = activation_backward(self.activation, z, cache["out"], d_out)
        d_w = dz.T @ cache["x"]
        d_b = dz.sum(axis=0)
        d_x = dz @ self.w
        return d_x, {"w": d_w, "b": d_b}
