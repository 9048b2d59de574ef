"""
The CRNN classifier: Conv1d(elu) -> BatchNorm -> Dropout -> MaxPool -> LSTM
-> Dropout -> Dense(sigmoid).

Batch-norm normalizes per conv filter with time steps folded into the batch
axis. The LSTM consumes the pooled sequence and hands only its final hidden
state to the dense head, which emits one sigmoid score per class.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.activations import Activation
from core.errors import ConfigError, ShapeError, StateError
from core.layers import (BatchNormLayer, Conv1dLayer, DenseLayer, DropoutLayer,
                         MaxPool1dLayer, Mode)
from core.lstm import LstmLayer
from core.tensor import Rng, Tensor

logger = logging.getLogger(__name__)


@dataclass
class CrnnConfig:
    in_channels: int
    window_len: int
    num_classes: int
    conv_filters: int = 84
    conv_kernel: int = 84
    conv_activation: str = "elu"
    dropout1: float = 0.01
    pool_size: int = 8
    lstm_units: int = 24
    lstm_stateful: bool = False
    dropout2: float = 0.01
    head_activation: str = "sigmoid"
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-5

    def conv_length(self) -> int:
        return self.window_len - self.conv_kernel + 1

    def pooled_length(self) -> int:
        return self.conv_length() // self.pool_size

    def shape_chain(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Per-sample shape after each stage"""
        return [
            ("input", (self.window_len, self.in_channels)),
            ("conv1d", (self.conv_length(), self.conv_filters)),
            ("maxpool1d", (self.pooled_length(), self.conv_filters)),
            ("lstm", (self.lstm_units,)),
            ("dense", (self.num_classes,)),
        ]

    def validate(self):
        counts = {
            "in_channels": self.in_channels, "window_len": self.window_len,
            "num_classes": self.num_classes, "conv_filters": self.conv_filters,
            "conv_kernel": self.conv_kernel, "pool_size": self.pool_size,
            "lstm_units": self.lstm_units,
        }
        for name, value in counts.items():
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"model.{name} must be an integer >= 1, got {value!r}")
        for name in ("dropout1", "dropout2"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"model.{name} must be in [0, 1), got {rate}")
        for name in ("conv_activation", "head_activation"):
            try:
                Activation(getattr(self, name))
            except ValueError:
                choices = ", ".join(a.value for a in Activation)
                raise ConfigError(f"model.{name} must be one of {choices}, got {getattr(self, name)!r}")
        if self.conv_length() < 1:
            raise ShapeError(f"conv1d stage: window_len {self.window_len} is shorter than "
                             f"conv_kernel {self.conv_kernel} (output length {self.conv_length()})")
        if self.conv_length() < self.pool_size:
            raise ShapeError(f"maxpool1d stage: conv output length {self.conv_length()} is shorter "
                             f"than pool_size {self.pool_size}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CrnnConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown model keys: {', '.join(unknown)}")
        missing = [name for name in ("in_channels", "window_len", "num_classes") if name not in data]
        if missing:
            raise ConfigError(f"missing model keys: {', '.join(missing)}")
        return cls(**data)


@dataclass
class ParamRow:
    layer: str
    output_shape: Tuple[int, ...]
    trainable: int
    non_trainable: int


class CrnnModel:

    def __init__(self, config: CrnnConfig, rng: Optional[Rng] = None):
        config.validate()
        self.config = config
        self.conv = Conv1dLayer(config.in_channels, config.conv_filters, config.conv_kernel,
                                Activation(config.conv_activation), rng)
        self.bn = BatchNormLayer(config.conv_filters, config.bn_momentum, config.bn_epsilon)
        self.drop1 = DropoutLayer(config.dropout1)
        self.pool = MaxPool1dLayer(config.pool_size)
        self.lstm = LstmLayer(config.conv_filters, config.lstm_units, config.lstm_stateful, rng)
        self.drop2 = DropoutLayer(config.dropout2)
        self.dense = DenseLayer(config.lstm_units, config.num_classes,
                                Activation(config.head_activation), rng)
        self._caches: Optional[Dict[str, Any]] = None

    def _trainable_layers(self) -> Dict[str, Any]:
        return {"conv": self.conv, "bn": self.bn, "lstm": self.lstm, "dense": self.dense}

    def params(self) -> Dict[str, Tensor]:
        """Trainable tensors by qualified name; values are the live arrays"""
        named = {}
        for prefix, layer in self._trainable_layers().items():
            for name, tensor in layer.params().items():
                named[f"{prefix}.{name}"] = tensor
        return named

    def buffers(self) -> Dict[str, Tensor]:
        return {f"bn.{name}": tensor for name, tensor in self.bn.buffers().items()}

    def reset_state(self):
        self.lstm.reset_state()

    def forward(self, batch: Tensor, mode: Mode = Mode.INFERENCE, rng: Optional[Rng] = None) -> Tensor:
        """Per-class scores [B, num_classes]"""
        cfg = self.config
        if batch.ndim != 3 or batch.shape[1:] != (cfg.window_len, cfg.in_channels):
            raise ShapeError(f"model expects [batch, {cfg.window_len}, {cfg.in_channels}], "
                             f"got {list(batch.shape)}")
        caches: Dict[str, Any] = {}
        out, caches["conv"] = self.conv.forward(batch, mode)
        n, length, filters = out.shape
        flat, caches["bn"] = self.bn.forward(out.reshape(n * length, filters), mode)
        out = flat.reshape(n, length, filters)
        out, caches["drop1"] = self.drop1.forward(out, mode, rng)
        out, caches["pool"] = self.pool.forward(out, mode)
        out, caches["lstm"] = self.lstm.forward(out, mode)
        out, caches["drop2"] = self.drop2.forward(out, mode, rng)
        scores, caches["dense"] = self.dense.forward(out, mode)
        self._caches = caches if mode is not Mode.INFERENCE else None
        return scores

    def backward(self, d_scores: Tensor) -> Dict[str, Tensor]:
        """Gradients of every trainable tensor for the last train/check forward"""
        if self._caches is None:
            raise StateError("model backward called without a train-mode forward")
        caches = self._caches
        grads: Dict[str, Tensor] = {}

        def collect(prefix: str, layer_grads: Dict[str, Tensor]):
            for name, grad in layer_grads.items():
                grads[f"{prefix}.{name}"] = grad

        d, layer_grads = self.dense.backward(caches["dense"], d_scores)
        collect("dense", layer_grads)
        d, _ = self.drop2.backward(caches["drop2"], d)
        d, layer_grads, _, _ = self.lstm.backward(caches["lstm"], d)
        collect("lstm", layer_grads)
        d, _ = self.pool.backward(caches["pool"], d)
        d, _ = self.drop1.backward(caches["drop1"], d)
        n, length, filters = d.shape
        d, layer_grads = self.bn.backward(caches["bn"], d.reshape(n * length, filters))
        collect("bn", layer_grads)
        _, layer_grads = self.conv.backward(caches["conv"], d.reshape(n, length, filters))
        collect("conv", layer_grads)
        return grads

    def predict_scores(self, samples: Tensor, batch_size: Optional[int] = None) -> Tensor:
        """Inference-mode scores, evaluated in chunks of batch_size"""
        count = samples.shape[0]
        step = batch_size or count
        if self.config.lstm_stateful and count % step:
            raise ShapeError(f"stateful model needs the sample count ({count}) divisible by the batch size ({step})")
        parts = [self.forward(samples[start:start + step], Mode.INFERENCE)
                 for start in range(0, count, step)]
        return np.concatenate(parts, axis=0)

    def predict(self, samples: Tensor, batch_size: Optional[int] = None) -> np.ndarray:
        """Class index per sample; argmax ties go to the lower class index"""
        return np.argmax(self.predict_scores(samples, batch_size), axis=1)

    def param_table(self) -> List[ParamRow]:
        cfg = self.config
        chain = dict(cfg.shape_chain())
        bn_buffers = sum(t.size for t in self.bn.buffers().values())
        return [
            ParamRow("conv1d", chain["conv1d"], _size(self.conv.params()), 0),
            ParamRow("batchnorm", chain["conv1d"], _size(self.bn.params()), bn_buffers),
            ParamRow("dropout", chain["conv1d"], 0, 0),
            ParamRow("maxpool1d", chain["maxpool1d"], 0, 0),
            ParamRow("lstm", chain["lstm"], _size(self.lstm.params()), 0),
            ParamRow("dropout", chain["lstm"], 0, 0),
            ParamRow("dense", chain["dense"], _size(self.dense.params()), 0),
        ]

    def param_count(self) -> Tuple[int, int]:
        """(trainable, non_trainable) element counts"""
        table = self.param_table()
        return sum(r.trainable for r in table), sum(r.non_trainable for r in table)

    def summary(self) -> str:
        lines = [f"{'layer':<10} {'output':<12} {'trainable':>10} {'fixed':>8}"]
        for row in self.param_table():
            shape = "x".join(str(d) for d in row.output_shape)
            lines.append(f"{row.layer:<10} {shape:<12} {row.trainable:>10} {row.non_trainable:>8}")
        trainable, fixed = self.param_count()
        lines.append(f"{'total':<10} {'':<12} {trainable:>10} {fixed:>8}")
        return "\n".join(lines)


def _size(tensors: Dict[str, Tensor]) -> int:
    return int(sum(t.size for t in tensors.values()))


def build(config: CrnnConfig, rng: Rng) -> CrnnModel:
    """Instantiate the CRNN with seeded glorot-uniform weights, forget-gate bias 1, other biases 0"""
    model = CrnnModel(config, rng)
    chain = " -> ".join("x".join(str(d) for d in shape) for _, shape in config.shape_chain())
    logger.debug("built crnn %s", chain)
    return model


def forward(model: CrnnModel, batch: Tensor, mode: Mode = Mode.INFERENCE, rng: Optional[Rng] = None) -> Tensor:
    return model.forward(batch, mode, rng)


def backward(model: CrnnModel, d_scores: Tensor) -> Dict[str, Tensor]:
    return model.backward(d_scores)


def predict(model: CrnnModel, batch: Tensor) -> np.ndarray:
    return model.predict(batch)


def param_count(model: CrnnModel) -> Tuple[int, int]:
    return model.param_count()
