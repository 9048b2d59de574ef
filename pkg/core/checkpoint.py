"""
CRN1 checkpoint files.

Layout (little-endian):
    b"CRN1"
    u32 format version (1)
    u32 length, UTF-8 JSON block {"model": CrnnConfig, "meta": {...}}
    u32 tensor count
    per tensor: u32 name length, name bytes, u32 rank, u32 dims..., f32 payload (row-major)

Tensors are the trainable parameters, the batch-norm running statistics and,
when present, the Adagrad accumulators under "adagrad.<param name>".
"""

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from core.errors import FormatError
from core.model import CrnnConfig, CrnnModel
from core.optim import Adagrad, AdagradState
from core.tensor import Tensor
from utils.fileio import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"CRN1"
FORMAT_VERSION = 1
ADAGRAD_PREFIX = "adagrad."

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    model: CrnnModel
    accumulators: Dict[str, Tensor] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    def optimizer(self, learning_rate: float, epsilon: float) -> Adagrad:
        """Adagrad optimizer resuming from the stored accumulators"""
        states = {name: AdagradState(acc.copy()) for name, acc in self.accumulators.items()}
        return Adagrad(learning_rate, epsilon, states)


def _named_tensors(model: CrnnModel, optimizer: Optional[Adagrad]) -> List[Tuple[str, Tensor]]:
    tensors = list(model.params().items()) + list(model.buffers().items())
    if optimizer is not None:
        for name, param in model.params().items():
            tensors.append((ADAGRAD_PREFIX + name, optimizer.state_for(name, param).accumulator))
    return tensors


def encode_checkpoint(model: CrnnModel, optimizer: Optional[Adagrad] = None,
                      meta: Optional[Dict[str, Any]] = None) -> bytes:
    header = json.dumps({"model": model.config.to_dict(), "meta": meta or {}},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = _named_tensors(model, optimizer)
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header,
             struct.pack("<I", len(tensors))]
    for name, tensor in tensors:
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<I{tensor.ndim}I", tensor.ndim, *tensor.shape))
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path: PathLike, model: CrnnModel, optimizer: Optional[Adagrad] = None,
                    meta: Optional[Dict[str, Any]] = None):
    """Write the checkpoint atomically (temp file + rename)"""
    atomic_write_bytes(path, encode_checkpoint(model, optimizer, meta))
    logger.debug("saved checkpoint %s", path)


class _Reader:

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise FormatError(f"truncated checkpoint while reading {what}", self.path)
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def decode_checkpoint(data: bytes, path: str = "<memory>") -> Checkpoint:
    reader = _Reader(data, path)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", path)
    version = reader.u32("format version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}, expected {FORMAT_VERSION}", path)
    header_len = reader.u32("config length")
    try:
        header = json.loads(reader.take(header_len, "config block").decode("utf-8"))
        config = CrnnConfig.from_dict(header["model"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise FormatError(f"unreadable config block: {e}", path)
    model = CrnnModel(config)
    expected = {**model.params(), **model.buffers()}

    count = reader.u32("tensor count")
    loaded: Dict[str, np.ndarray] = {}
    for index in range(count):
        name_len = reader.u32(f"tensor {index} name length")
        name = reader.take(name_len, f"tensor {index} name").decode("utf-8", errors="replace")
        rank = reader.u32(f"tensor {name} rank")
        if not 1 <= rank <= 3:
            raise FormatError(f"tensor {name} has rank {rank}, expected 1..3", path)
        dims = tuple(reader.u32(f"tensor {name} dims") for _ in range(rank))
        size = math.prod(dims)
        if 4 * size > len(data) - reader.offset:
            raise FormatError(f"tensor {name} declares {'x'.join(map(str, dims))} values, "
                              f"more than the {len(data) - reader.offset} bytes left", path)
        payload = reader.take(4 * size, f"tensor {name} payload")
        loaded[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} trailing bytes after the last tensor", path)

    accumulators = {k[len(ADAGRAD_PREFIX):]: v for k, v in loaded.items() if k.startswith(ADAGRAD_PREFIX)}
    plain = {k: v for k, v in loaded.items() if not k.startswith(ADAGRAD_PREFIX)}
    params = model.params()
    expected_count = len(expected) + (len(params) if accumulators else 0)
    if count != expected_count or set(plain) != set(expected) or (accumulators and set(accumulators) != set(params)):
        raise FormatError(f"checkpoint holds {count} tensors, model needs {expected_count} "
                          f"({', '.join(sorted(expected))} and optional adagrad accumulators)", path)
    for name, target in expected.items():
        if plain[name].shape != target.shape:
            raise FormatError(f"tensor {name} has shape {list(plain[name].shape)}, "
                              f"model needs {list(target.shape)}", path)
        target[...] = plain[name]
    for name, acc in accumulators.items():
        if acc.shape != params[name].shape:
            raise FormatError(f"accumulator for {name} has shape {list(acc.shape)}", path)
    return Checkpoint(model, accumulators, header.get("meta", {}))


def load_checkpoint(path: PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    return decode_checkpoint(data, str(path))


def load(path: PathLike) -> CrnnModel:
    return load_checkpoint(path).model


def save(model: CrnnModel, path: PathLike, optimizer: Optional[Adagrad] = None,
         meta: Optional[Dict[str, Any]] = None):
    save_checkpoint(path, model, optimizer, meta)
