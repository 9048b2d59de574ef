"""Elementwise activation functions and their derivatives."""

from enum import Enum

import numpy as np

from core.tensor import Tensor

ELU_ALPHA = 1.0


class Activation(Enum):
    IDENTITY = "identity"
    ELU = "elu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"


def elu(x: Tensor, alpha: float = ELU_ALPHA) -> Tensor:
    """x for x > 0, alpha*(exp(x) - 1) otherwise"""
    if alpha <= 0:
        raise ValueError(f"elu alpha must be > 0, got {alpha}")
    # expm1 on the clipped branch keeps large positive x from overflowing
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: Tensor, alpha: float = ELU_ALPHA) -> Tensor:
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, overflow-safe for large |x|"""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad_from_output(s: Tensor) -> Tensor:
    return s * (1.0 - s)


def tanh(x: Tensor) -> Tensor:
    return np.tanh(x)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def activate(kind: Activation, z: Tensor) -> Tensor:
    if kind is Activation.IDENTITY:
        return z
    if kind is Activation.ELU:
        return elu(z)
    if kind is Activation.SIGMOID:
        return sigmoid(z)
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.RELU:
        return relu(z)
    raise ValueError(f"unknown activation {kind}")


def activation_backward(kind: Activation, z: Tensor, out: Tensor, d_out: Tensor) -> Tensor:
    """Chain d_out through the activation given pre-activation z and output"""
    if kind is Activation.IDENTITY:
        return d_out
    if kind is Activation.ELU:
        return d_out * elu_grad(z)
    if kind is Activation.SIGMOID:
        return d_out * sigmoid_grad_from_output(out)
    if kind is Activation.TANH:
        return d_out * (1.0 - out * out)
    if kind is Activation.RELU:
        return d_out * (z > 0)
    raise ValueError(f"unknown activation {kind}")
