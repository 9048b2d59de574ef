"""
Mini-batch training of the CRNN with MSLE and Adagrad.

Batches are taken in a seeded shuffled order each epoch (fixed order when the
LSTM is stateful). After every epoch the held-out set is scored in inference
mode. Train loss and accuracy are running averages over the epoch's batches,
measured in train mode.
"""

import logging
import time
from dataclasses import asdict, dataclass, fields
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from core.dataset import WindowSet, feasible_batch_sizes, one_hot
from core.errors import ConfigError, DivisibilityError, ShapeError
from core.layers import Mode
from core.losses import msle_grad, msle_loss
from core.metrics import ConfusionMatrix, EpochMetrics, confusion
from core.model import CrnnModel
from core.optim import Adagrad
from core.tensor import Rng

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.01
    adagrad_epsilon: float = 1e-7
    seed: int = 0
    shuffle: bool = True
    record_wall_time: bool = False

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"train.learning_rate must be >= 0, got {self.learning_rate}")
        if self.adagrad_epsilon < 0:
            raise ConfigError(f"train.adagrad_epsilon must be >= 0, got {self.adagrad_epsilon}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown train keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    scores: np.ndarray
    predictions: np.ndarray
    confusion: ConfusionMatrix


def check_divisible(count: int, batch_size: int, what: str):
    if count % batch_size:
        options = ", ".join(str(b) for b in feasible_batch_sizes(count, batch_size))
        raise DivisibilityError(f"{what} has {count} samples, not divisible by batch size {batch_size}; "
                                f"nearest feasible batch sizes: {options}")


def check_compatible(model: CrnnModel, ws: WindowSet, what: str = "data"):
    """The window set must match the model's window length, channels and class count"""
    cfg = model.config
    if (ws.window_len, ws.channels) != (cfg.window_len, cfg.in_channels):
        raise ShapeError(f"{what} windows are {ws.window_len} x {ws.channels}, model expects "
                         f"{cfg.window_len} x {cfg.in_channels}")
    if ws.num_classes != cfg.num_classes:
        raise ShapeError(f"{what} has {ws.num_classes} classes, model has {cfg.num_classes} outputs")


def evaluate(model: CrnnModel, ws: WindowSet, batch_size: Optional[int] = None) -> EvalResult:
    """Inference-mode loss, accuracy and confusion matrix over a whole window set"""
    check_compatible(model, ws)
    if model.config.lstm_stateful:
        model.reset_state()
    scores = model.predict_scores(ws.samples, batch_size)
    loss = msle_loss(one_hot(ws.labels, ws.num_classes), scores)
    predictions = np.argmax(scores, axis=1)
    matrix = confusion(predictions, ws.labels, ws.num_classes, ws.class_names)
    return EvalResult(loss, matrix.accuracy, scores, predictions, matrix)


def train_epoch(model: CrnnModel, data: WindowSet, cfg: TrainConfig, rng: Rng,
                optimizer: Optional[Adagrad] = None, test: Optional[WindowSet] = None,
                epoch: int = 1) -> EpochMetrics:
    """
    One pass over data: forward (train mode) -> MSLE -> backward -> Adagrad on
    every trainable tensor, batch by batch. test defaults to data when omitted.
    """
    check_compatible(model, data, "training data")
    check_divisible(len(data), cfg.batch_size, "training set")
    optimizer = optimizer or Adagrad(cfg.learning_rate, cfg.adagrad_epsilon)
    stateful = model.config.lstm_stateful
    started = time.perf_counter()

    model.reset_state()
    order = rng.permutation(len(data)) if cfg.shuffle and not stateful else np.arange(len(data))
    targets = one_hot(data.labels, data.num_classes)
    params = model.params()
    loss_sum = 0.0
    correct = 0
    steps = len(data) // cfg.batch_size
    for step in range(steps):
        idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
        scores = model.forward(data.samples[idx], Mode.TRAIN, rng)
        y = targets[idx]
        loss_sum += msle_loss(y, scores)
        correct += int(np.sum(np.argmax(scores, axis=1) == data.labels[idx]))
        grads = model.backward(msle_grad(y, scores))
        optimizer.step(params, grads)

    held_out = evaluate(model, test if test is not None else data, cfg.batch_size)
    seconds = time.perf_counter() - started
    return EpochMetrics(
        epoch=epoch,
        train_loss=loss_sum / steps,
        train_accuracy=correct / len(data),
        test_loss=held_out.loss,
        test_accuracy=held_out.accuracy,
        wall_seconds=seconds if cfg.record_wall_time else 0.0,
    )


class Trainer:
    """Multi-epoch run holding the optimizer, generator and epoch counter; resumable from a checkpoint"""

    def __init__(self, model: CrnnModel, cfg: TrainConfig, rng: Optional[Rng] = None,
                 optimizer: Optional[Adagrad] = None, start_epoch: int = 0):
        cfg.validate()
        self.model = model
        self.cfg = cfg
        self.rng = rng or Rng(cfg.seed)
        self.optimizer = optimizer or Adagrad(cfg.learning_rate, cfg.adagrad_epsilon)
        self.epoch = start_epoch
        self.history: List[EpochMetrics] = []

    @classmethod
    def resume(cls, model: CrnnModel, cfg: TrainConfig, optimizer: Adagrad,
               meta: Dict[str, Any]) -> "Trainer":
        rng = Rng(cfg.seed)
        if "rng_state" in meta:
            rng.set_state(meta["rng_state"])
        else:
            logger.warning("checkpoint has no generator state; continuing from seed %d", cfg.seed)
        optimizer.learning_rate = cfg.learning_rate
        optimizer.epsilon = cfg.adagrad_epsilon
        return cls(model, cfg, rng, optimizer, int(meta.get("epoch", 0)))

    def fit(self, train: WindowSet, test: WindowSet,
            on_epoch: Optional[Callable[[EpochMetrics], None]] = None) -> List[EpochMetrics]:
        """Run cfg.epochs further epochs; returns the metrics of this call"""
        check_divisible(len(train), self.cfg.batch_size, "training set")
        if self.model.config.lstm_stateful:
            check_divisible(len(test), self.cfg.batch_size, "test set")
        run: List[EpochMetrics] = []
        last = self.epoch + self.cfg.epochs
        for _ in range(self.cfg.epochs):
            self.epoch += 1
            metrics = train_epoch(self.model, train, self.cfg, self.rng, self.optimizer, test, self.epoch)
            logger.info("epoch %d/%d loss=%.5f acc=%.4f test_loss=%.5f test_acc=%.4f %.1fs",
                        metrics.epoch, last, metrics.train_loss, metrics.train_accuracy,
                        metrics.test_loss, metrics.test_accuracy, metrics.wall_seconds)
            run.append(metrics)
            if on_epoch is not None:
                on_epoch(metrics)
        self.history.extend(run)
        return run

    def checkpoint_meta(self, class_names: List[str]) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "rng_state": self.rng.get_state(),
            "class_names": list(class_names),
            "train": self.cfg.to_dict(),
        }
