"""Accuracy, confusion matrix and per-epoch metric records."""

import csv
import io
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.errors import ShapeError

METRICS_HEADER = ["epoch", "train_loss", "train_acc", "test_loss", "test_acc", "seconds"]


def _as_labels(values: Sequence[int]) -> np.ndarray:
    return np.asarray(values, dtype=np.int64).reshape(-1)


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Fraction of predictions equal to their label"""
    preds = _as_labels(predictions)
    truth = _as_labels(labels)
    if preds.size == 0:
        raise ShapeError("accuracy needs at least one prediction")
    if preds.size != truth.size:
        raise ShapeError(f"accuracy got {preds.size} predictions for {truth.size} labels")
    return float(np.count_nonzero(preds == truth)) / preds.size


@dataclass
class ConfusionMatrix:
    """counts[true][predicted]"""
    counts: np.ndarray
    class_names: Optional[List[str]] = None

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            return 0.0
        return float(np.trace(self.counts)) / self.total

    def recall(self) -> List[float]:
        rows = self.counts.sum(axis=1)
        return [float(self.counts[c, c] / rows[c]) if rows[c] else 0.0 for c in range(self.num_classes)]

    def precision(self) -> List[float]:
        cols = self.counts.sum(axis=0)
        return [float(self.counts[c, c] / cols[c]) if cols[c] else 0.0 for c in range(self.num_classes)]

    def names(self) -> List[str]:
        if self.class_names is not None:
            return list(self.class_names)
        return [str(c) for c in range(self.num_classes)]

    def to_dict(self) -> Dict[str, Any]:
        names = self.names()
        recall = self.recall()
        precision = self.precision()
        return {
            "classes": names,
            "counts": self.counts.astype(int).tolist(),
            "accuracy": self.accuracy,
            "per_class": [
                {"class": name, "recall": r, "precision": p}
                for name, r, p in zip(names, recall, precision)
            ],
        }

    def render(self) -> str:
        """Plain-text table with true classes as rows"""
        names = self.names()
        width = max([len(n) for n in names] + [len(str(self.counts.max())), 4])
        lines = [" " * width + " | " + " ".join(n.rjust(width) for n in names)]
        lines.append("-" * len(lines[0]))
        for name, row in zip(names, self.counts):
            lines.append(name.rjust(width) + " | " + " ".join(str(int(v)).rjust(width) for v in row))
        return "\n".join(lines)


def confusion(predictions: Sequence[int], labels: Sequence[int], num_classes: int,
              class_names: Optional[List[str]] = None) -> ConfusionMatrix:
    preds = _as_labels(predictions)
    truth = _as_labels(labels)
    if preds.size != truth.size:
        raise ShapeError(f"confusion got {preds.size} predictions for {truth.size} labels")
    for name, values in (("prediction", preds), ("label", truth)):
        bad = values[(values < 0) | (values >= num_classes)]
        if bad.size:
            raise ValueError(f"{name} class {int(bad[0])} out of range for {num_classes} classes")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, preds), 1)
    return ConfusionMatrix(counts, class_names)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: float
    test_accuracy: float
    wall_seconds: float

    def csv_row(self) -> List[str]:
        return [
            str(self.epoch),
            repr(float(self.train_loss)),
            repr(float(self.train_accuracy)),
            repr(float(self.test_loss)),
            repr(float(self.test_accuracy)),
            f"{self.wall_seconds:.3f}",
        ]


def metrics_csv(history: Sequence[EpochMetrics]) -> str:
    """Render the per-epoch history with the fixed six-column header"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for record in history:
        writer.writerow(record.csv_row())
    return buffer.getvalue()
