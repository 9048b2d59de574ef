"""
Windowed, labelled datasets: windowing of raw signals, class assembly,
divisibility-aware stratified splits, one-hot targets and the on-disk
WindowSet archive (manifest.json plus one VIB1 file per class).
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import DivisibilityError, FormatError, ShapeError
from core.signals import DEFAULT_SAMPLE_RATE_HZ, SignalMatrix, load_binary_matrix, save_binary_matrix
from core.tensor import Rng, Tensor
from utils.fileio import atomic_write_text

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

PathLike = Union[str, Path]


def window(signal: SignalMatrix, window_len: int) -> Tensor:
    """Consecutive non-overlapping windows [floor(rows/T), T, C]; remainder rows dropped"""
    if window_len < 1:
        raise ShapeError(f"window length must be >= 1, got {window_len}")
    if signal.rows < window_len:
        source = f" {signal.source}" if signal.source else ""
        raise ShapeError(f"signal{source} has {signal.rows} rows, fewer than the window length {window_len}")
    count = signal.rows // window_len
    dropped = signal.rows - count * window_len
    if dropped:
        logger.debug("windowing %s drops %d trailing rows", signal.source, dropped)
    return signal.values[:count * window_len].reshape(count, window_len, signal.cols).copy()


@dataclass
class WindowSet:
    samples: Tensor
    labels: np.ndarray
    class_names: List[str]
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 3:
            raise ShapeError(f"window set samples must be [N, T, C], got {list(self.samples.shape)}")
        if self.samples.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.samples.shape[0]} samples but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ShapeError(f"labels must lie in [0, {len(self.class_names)})")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def window_len(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return self.samples.shape[2]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> List[int]:
        return np.bincount(self.labels, minlength=self.num_classes).tolist()

    def subset(self, indices: np.ndarray) -> "WindowSet":
        return WindowSet(self.samples[indices], self.labels[indices], list(self.class_names), self.sample_rate_hz)


def assemble(per_class: Sequence[Tensor], class_names: Sequence[str],
             sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> WindowSet:
    """Concatenate per-class window tensors, labelling them 0..C-1 in the given order"""
    if len(per_class) != len(class_names):
        raise ShapeError(f"{len(per_class)} window tensors for {len(class_names)} class names")
    if not per_class:
        raise ShapeError("assemble needs at least one class")
    shape = per_class[0].shape[1:]
    for name, windows in zip(class_names, per_class):
        if windows.ndim != 3 or windows.shape[1:] != shape:
            raise ShapeError(f"class {name!r} windows have shape {list(windows.shape[1:])}, "
                             f"expected {list(shape)}")
    samples = np.concatenate(per_class, axis=0)
    labels = np.concatenate([np.full(len(w), index, dtype=np.int64) for index, w in enumerate(per_class)])
    return WindowSet(samples, labels, list(class_names), sample_rate_hz)


@dataclass
class SplitSpec:
    train_fraction: float = 0.25
    batch_size: int = 64
    seed: int = 0
    stratified: bool = True
    validation_fraction: float = 0.0

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DivisibilityError(f"split.train_fraction must be in (0, 1), got {self.train_fraction}")
        if not 0.0 <= self.validation_fraction < 1.0 - self.train_fraction:
            raise DivisibilityError(f"split.validation_fraction must be in [0, {1.0 - self.train_fraction}), "
                                    f"got {self.validation_fraction}")
        if self.batch_size < 1:
            raise DivisibilityError(f"split.batch_size must be >= 1, got {self.batch_size}")


def feasible_batch_sizes(total: int, near: int, limit: int = 3) -> List[int]:
    """Divisors of total closest to near"""
    divisors = [d for d in range(1, total + 1) if total % d == 0]
    return sorted(sorted(divisors, key=lambda d: (abs(d - near), d))[:limit])


def feasible_fractions(total: int, batch_size: int, near: float, limit: int = 2) -> List[float]:
    batches = total // batch_size
    options = [k * batch_size / total for k in range(1, batches)]
    return sorted(sorted(options, key=lambda f: (abs(f - near), f))[:limit])


def _partition_size(total: int, fraction: float, batch_size: int, what: str) -> int:
    if total % batch_size:
        raise DivisibilityError(f"{total} samples cannot be split into parts divisible by batch size "
                                f"{batch_size}; nearest feasible batch sizes: "
                                f"{feasible_batch_sizes(total, batch_size)}")
    size = int(round(total * fraction))
    if size % batch_size or size == 0 or size == total:
        options = ", ".join(f"{f:.6g}" for f in feasible_fractions(total, batch_size, fraction))
        raise DivisibilityError(f"{what} fraction {fraction} gives {size} of {total} samples, "
                                f"not a non-zero multiple of batch size {batch_size}; "
                                f"nearest feasible fractions: {options or 'none'}")
    return size


def _stratified_quotas(counts: List[int], size: int) -> List[int]:
    """Per-class quotas proportional to counts summing to size (largest remainder)"""
    total = sum(counts)
    exact = [c * size / total for c in counts]
    quotas = [math.floor(e) for e in exact]
    leftover = size - sum(quotas)
    order = sorted(range(len(counts)), key=lambda c: (-(exact[c] - quotas[c]), c))
    for c in order[:leftover]:
        quotas[c] += 1
    return quotas


def _draw_partitions(ws: WindowSet, sizes: List[int], stratified: bool, rng: Rng) -> List[np.ndarray]:
    """Randomly partition sample indices into groups of the given sizes"""
    parts: List[List[np.ndarray]] = [[] for _ in sizes]
    if stratified:
        pools = [np.flatnonzero(ws.labels == c) for c in range(ws.num_classes)]
        counts = [len(p) for p in pools]
        remaining_counts = counts
        quotas_by_part = []
        for size in sizes[:-1]:
            quotas = _stratified_quotas(remaining_counts, size)
            quotas_by_part.append(quotas)
            remaining_counts = [r - q for r, q in zip(remaining_counts, quotas)]
        quotas_by_part.append(remaining_counts)
        for c, pool in enumerate(pools):
            shuffled = pool[rng.permutation(len(pool))]
            start = 0
            for p, quotas in enumerate(quotas_by_part):
                parts[p].append(shuffled[start:start + quotas[c]])
                start += quotas[c]
    else:
        shuffled = rng.permutation(len(ws))
        start = 0
        for p, size in enumerate(sizes):
            parts[p].append(shuffled[start:start + size])
            start += size
    result = []
    for chunks in parts:
        indices = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        result.append(indices[rng.permutation(len(indices))])
    return result


def split(ws: WindowSet, spec: SplitSpec, rng: Optional[Rng] = None) -> Tuple[WindowSet, WindowSet]:
    """Seeded (stratified) train/test split with both sizes divisible by the batch size"""
    spec.validate()
    rng = rng or Rng(spec.seed)
    train_size = _partition_size(len(ws), spec.train_fraction, spec.batch_size, "train")
    train_idx, test_idx = _draw_partitions(ws, [train_size, len(ws) - train_size], spec.stratified, rng)
    logger.debug("split %d samples into %d train / %d test", len(ws), len(train_idx), len(test_idx))
    return ws.subset(train_idx), ws.subset(test_idx)


def split_with_validation(ws: WindowSet, spec: SplitSpec,
                          rng: Optional[Rng] = None) -> Tuple[WindowSet, WindowSet, WindowSet]:
    """Train/validation/test split; every part divisible by the batch size"""
    spec.validate()
    if spec.validation_fraction <= 0:
        raise DivisibilityError("split.validation_fraction must be > 0 for a three-way split")
    rng = rng or Rng(spec.seed)
    train_size = _partition_size(len(ws), spec.train_fraction, spec.batch_size, "train")
    val_size = _partition_size(len(ws), spec.validation_fraction, spec.batch_size, "validation")
    test_size = len(ws) - train_size - val_size
    if test_size <= 0:
        raise DivisibilityError(f"train ({train_size}) and validation ({val_size}) leave no test samples")
    train_idx, val_idx, test_idx = _draw_partitions(ws, [train_size, val_size, test_size], spec.stratified, rng)
    return ws.subset(train_idx), ws.subset(val_idx), ws.subset(test_idx)


def one_hot(labels: Sequence[int], num_classes: int) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise ValueError(f"label {int(bad)} out of range for {num_classes} classes")
    encoded = np.zeros((labels.size, num_classes))
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded


def class_file_name(index: int) -> str:
    return f"class_{index:02d}.vib"


def save_archive(ws: WindowSet, directory: PathLike, seed: Optional[int] = None,
                 extra: Optional[Dict[str, Any]] = None):
    """Write manifest.json and one VIB1 file per class holding its windows stacked as rows"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for index, name in enumerate(ws.class_names):
        windows = ws.samples[ws.labels == index]
        if len(windows) == 0:
            raise ShapeError(f"class {name!r} has no windows")
        rows = windows.reshape(len(windows) * ws.window_len, ws.channels)
        save_binary_matrix(SignalMatrix(rows, ws.sample_rate_hz, label=name), directory / class_file_name(index))
        files.append(class_file_name(index))
    manifest = {
        "class_names": list(ws.class_names),
        "window_len": ws.window_len,
        "channels": ws.channels,
        "num_samples": len(ws),
        "counts": ws.class_counts(),
        "files": files,
        "sample_rate_hz": ws.sample_rate_hz,
        "seed": seed,
    }
    if extra:
        manifest.update(extra)
    atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(directory: PathLike) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_NAME
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid manifest JSON: {e}", str(path))
    for key in ("class_names", "window_len", "channels", "num_samples", "files"):
        if key not in manifest:
            raise FormatError(f"manifest is missing {key!r}", str(path))
    return manifest


def load_archive(directory: PathLike) -> WindowSet:
    directory = Path(directory)
    manifest = read_manifest(directory)
    window_len = int(manifest["window_len"])
    per_class = []
    for name, file_name in zip(manifest["class_names"], manifest["files"]):
        matrix = load_binary_matrix(directory / file_name)
        if matrix.cols != manifest["channels"] or matrix.rows % window_len:
            raise FormatError(f"class {name!r} file is {matrix.rows} x {matrix.cols}, not a stack of "
                              f"{window_len} x {manifest['channels']} windows", str(directory / file_name))
        per_class.append(matrix.values.reshape(matrix.rows // window_len, window_len, matrix.cols))
    ws = assemble(per_class, manifest["class_names"],
                  float(manifest.get("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ)))
    if len(ws) != manifest["num_samples"]:
        raise FormatError(f"archive holds {len(ws)} samples, manifest says {manifest['num_samples']}",
                          str(directory / MANIFEST_NAME))
    return ws
