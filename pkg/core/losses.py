"""Mean squared logarithmic error and its gradient."""

import numpy as np

from core.errors import ShapeError
from core.tensor import Tensor


def _check_msle_args(y: Tensor, y_hat: Tensor):
    if y.shape != y_hat.shape:
        raise ShapeError(f"msle shapes differ: {list(y.shape)} vs {list(y_hat.shape)}")
    if y.size == 0:
        raise ShapeError("msle needs at least one element")
    if np.any(y <= -1.0) or np.any(y_hat <= -1.0):
        raise ValueError("msle arguments must all be > -1")


def msle_loss(y: Tensor, y_hat: Tensor) -> float:
    """Mean over all N elements of (log(y + 1) - log(y_hat + 1))^2"""
    _check_msle_args(y, y_hat)
    diff = np.log1p(y) - np.log1p(y_hat)
    return float(np.mean(diff * diff))


def msle_grad(y: Tensor, y_hat: Tensor) -> Tensor:
    """Gradient of msle_loss with respect to y_hat"""
    _check_msle_args(y, y_hat)
    diff = np.log1p(y) - np.log1p(y_hat)
    return -(2.0 / y.size) * diff / (1.0 + y_hat)
