"""
Central finite-difference gradient checks.

Each tensor element is nudged by +/- eps in place and the scalar loss is
re-evaluated; the relative error against the analytic gradient is
|a - n| / max(|a|, |n|, floor). Layers are checked through the projected
loss sum(out * g) with a fixed random g, the full model through MSLE.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np

from core.activations import Activation
from core.layers import BatchNormLayer, Conv1dLayer, DenseLayer, MaxPool1dLayer, Mode
from core.losses import msle_grad, msle_loss
from core.lstm import LstmLayer
from core.model import CrnnConfig, CrnnModel
from core.tensor import Rng, Tensor

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
DEFAULT_TOLERANCE = 1e-4
DEFAULT_FLOOR = 1e-6


@dataclass
class GradCheckEntry:
    name: str
    max_relative_error: float
    elements: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


@dataclass
class GradCheckReport:
    entries: List[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def max_relative_error(self) -> float:
        return max((entry.max_relative_error for entry in self.entries), default=0.0)

    def extend(self, prefix: str, other: "GradCheckReport"):
        for entry in other.entries:
            self.entries.append(GradCheckEntry(f"{prefix}.{entry.name}", entry.max_relative_error,
                                               entry.elements, entry.tolerance))

    def render(self) -> str:
        width = max([len(e.name) for e in self.entries] + [9])
        lines = [f"{'parameter':<{width}}  {'elements':>8}  {'max rel err':>11}  {'tol':>7}  result"]
        for e in self.entries:
            verdict = "ok" if e.passed else "FAIL"
            lines.append(f"{e.name:<{width}}  {e.elements:>8}  {e.max_relative_error:>11.3e}  "
                         f"{e.tolerance:>7.0e}  {verdict}")
        return "\n".join(lines)


def numeric_gradient(loss_fn: Callable[[], float], tensor: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    """Central differences of loss_fn with respect to every element of tensor (mutated and restored)"""
    grad = np.zeros(tensor.shape)
    flat = tensor.reshape(-1)
    if not np.shares_memory(flat, tensor):
        raise ValueError("gradient check needs a contiguous tensor")
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = loss_fn()
        flat[i] = original - eps
        minus = loss_fn()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: Tensor, numeric: Tensor, floor: float = DEFAULT_FLOOR) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradient_check(loss_fn: Callable[[], float], tensors: Dict[str, Tensor], analytic: Dict[str, Tensor],
                   tolerance: float = DEFAULT_TOLERANCE, eps: float = DEFAULT_EPS,
                   floor: float = DEFAULT_FLOOR) -> GradCheckReport:
    """Compare analytic gradients against central differences, one entry per tensor"""
    report = GradCheckReport()
    for name, tensor in tensors.items():
        numeric = numeric_gradient(loss_fn, tensor, eps)
        error = relative_error(analytic[name], numeric, floor)
        report.entries.append(GradCheckEntry(name, error, tensor.size, tolerance))
        logger.debug("gradcheck %s: max relative error %.3e", name, error)
    return report


def check_layer(layer: Any, x: Tensor, rng: Rng, mode: Mode = Mode.CHECK,
                tolerance: float = DEFAULT_TOLERANCE) -> GradCheckReport:
    """Check d_x and every parameter gradient of a layer under loss sum(out * g)"""
    x = np.array(x, dtype=np.float64)
    out, cache = layer.forward(x, mode)
    projection = rng.normal(out.shape)
    result = layer.backward(cache, projection)
    d_x, grads = result[0], result[1]

    def loss() -> float:
        return float(np.sum(layer.forward(x, mode)[0] * projection))

    tensors = {"x": x, **layer.params()}
    analytic = {"x": d_x, **grads}
    return gradient_check(loss, tensors, analytic, tolerance)


def check_msle(y: Tensor, y_hat: Tensor, tolerance: float = 1e-7) -> GradCheckReport:
    y_hat = np.array(y_hat, dtype=np.float64)
    return gradient_check(lambda: msle_loss(y, y_hat), {"y_hat": y_hat}, {"y_hat": msle_grad(y, y_hat)},
                          tolerance)


def check_model(model: CrnnModel, x: Tensor, y: Tensor, tolerance: float = DEFAULT_TOLERANCE) -> GradCheckReport:
    """Full CRNN under MSLE in check mode (dropout off, batch-norm on running statistics)"""
    x = np.array(x, dtype=np.float64)
    scores = model.forward(x, Mode.CHECK)
    analytic = model.backward(msle_grad(y, scores))

    def loss() -> float:
        return msle_loss(y, model.forward(x, Mode.CHECK))

    return gradient_check(loss, model.params(), analytic, tolerance)


@dataclass
class ToySize:
    batch: int = 3
    window_len: int = 20
    channels: int = 2
    filters: int = 4
    kernel: int = 5
    pool_size: int = 2
    lstm_units: int = 3
    num_classes: int = 4
    steps: int = 5


def run_suite(size: ToySize, seed: int = 0, tolerance: float = DEFAULT_TOLERANCE,
              dense_tolerance: float = 1e-6) -> GradCheckReport:
    """Per-layer and full-model checks at toy scale"""
    rng = Rng(seed)
    report = GradCheckReport()
    b, t, c = size.batch, size.window_len, size.channels

    dense = DenseLayer(size.lstm_units, size.num_classes, Activation.SIGMOID, rng)
    report.extend("dense", check_layer(dense, rng.normal((b, size.lstm_units)), rng,
                                       tolerance=dense_tolerance))

    conv = Conv1dLayer(c, size.filters, size.kernel, Activation.ELU, rng)
    report.extend("conv1d", check_layer(conv, rng.normal((b, t, c)), rng, tolerance=tolerance))

    pool = MaxPool1dLayer(size.pool_size)
    report.extend("maxpool1d", check_layer(pool, rng.normal((b, t, size.filters)), rng, tolerance=tolerance))

    bn = BatchNormLayer(size.filters)
    bn.gamma[...] = rng.uniform((size.filters,), 0.5, 1.5)
    bn.beta[...] = rng.normal((size.filters,))
    report.extend("batchnorm", check_layer(bn, rng.normal((b * 4, size.filters)), rng, Mode.TRAIN, tolerance))

    lstm = LstmLayer(size.filters, size.lstm_units, rng=rng)
    report.extend("lstm", check_layer(lstm, rng.normal((b, size.steps, size.filters)), rng, tolerance=tolerance))

    y = np.zeros((b, size.num_classes))
    y[np.arange(b), np.arange(b) % size.num_classes] = 1.0
    report.extend("msle", check_msle(y, rng.uniform((b, size.num_classes), 0.05, 0.95), dense_tolerance))

    config = CrnnConfig(in_channels=c, window_len=t, num_classes=size.num_classes,
                        conv_filters=size.filters, conv_kernel=size.kernel, pool_size=size.pool_size,
                        lstm_units=size.lstm_units)
    model = CrnnModel(config, rng)
    report.extend("crnn", check_model(model, rng.normal((b, t, c)), y, tolerance))
    return report
