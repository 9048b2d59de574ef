"""
Raw vibration recordings: text matrices and the VIB1 binary interchange format.

Text: UTF-8 lines of numbers separated by spaces/tabs or by single commas,
'#' lines ignored. VIB1: b"VIB1", u32 rows, u32 cols, f32 sample_rate_hz,
then rows*cols f32 values in row-major order, all little-endian.
"""

import logging
import math
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from core.errors import ConfigError, FormatError, ShapeError
from utils.fileio import atomic_write_bytes

logger = logging.getLogger(__name__)

VIB_MAGIC = b"VIB1"
VIB_HEADER = struct.Struct("<4sIIf")
U32_MAX = 2 ** 32 - 1
DEFAULT_SAMPLE_RATE_HZ = 20000.0

PathLike = Union[str, Path]


@dataclass
class SignalMatrix:
    """Time steps as rows, channels as columns"""
    values: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    source: Optional[str] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ShapeError(f"signal matrix must be rows x cols with both >= 1, got {list(self.values.shape)}")
        if not self.sample_rate_hz > 0 or not math.isfinite(self.sample_rate_hz):
            raise ConfigError(f"sample rate must be a finite value > 0, got {self.sample_rate_hz}")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def seconds(self) -> float:
        return self.rows / self.sample_rate_hz


def _split_fields(line: str):
    if "," in line:
        return [field.strip() for field in line.split(",")]
    return line.split()


def load_text_matrix(path: PathLike, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> SignalMatrix:
    path = str(path)
    rows = []
    width = None
    with open(path, "rb") as f:
        for line_no, raw in enumerate(f, start=1):
            try:
                stripped = raw.decode("utf-8").strip()
            except UnicodeDecodeError as e:
                raise FormatError(f"not UTF-8 text (byte {e.start} of the line)", path, line_no)
            if not stripped or stripped.startswith("#"):
                continue
            fields = _split_fields(stripped)
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise FormatError(f"ragged row: {len(fields)} fields, expected {width}", path, line_no)
            try:
                rows.append([float(field) for field in fields])
            except ValueError:
                bad = next(field for field in fields if not _is_number(field))
                raise FormatError(f"non-numeric token {bad!r}", path, line_no)
    if not rows:
        raise FormatError("empty file: no numeric rows", path)
    values = np.array(rows, dtype=np.float64)
    logger.debug("loaded %s: %d x %d", path, values.shape[0], values.shape[1])
    return SignalMatrix(values, sample_rate_hz, source=path)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def encode_binary_matrix(m: SignalMatrix) -> bytes:
    if m.rows > U32_MAX or m.cols > U32_MAX:
        raise FormatError(f"matrix {m.rows} x {m.cols} exceeds the u32 dimension range", m.source)
    header = VIB_HEADER.pack(VIB_MAGIC, m.rows, m.cols, m.sample_rate_hz)
    return header + np.ascontiguousarray(m.values, dtype="<f4").tobytes()


def save_binary_matrix(m: SignalMatrix, path: PathLike):
    atomic_write_bytes(path, encode_binary_matrix(m))


def decode_binary_matrix(data: bytes, path: str = "<memory>") -> SignalMatrix:
    if len(data) < VIB_HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes", path)
    magic, rows, cols, rate = VIB_HEADER.unpack_from(data)
    if magic != VIB_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {VIB_MAGIC!r}", path)
    if rows == 0 or cols == 0:
        raise FormatError(f"header declares an empty matrix {rows} x {cols}", path)
    if not rate > 0 or not math.isfinite(rate):
        raise FormatError(f"header declares sample rate {rate}, expected a finite value > 0", path)
    expected = rows * cols * 4
    if expected > sys.maxsize:
        raise FormatError(f"dimension overflow: {rows} x {cols} exceeds the addressable size", path)
    payload = len(data) - VIB_HEADER.size
    if payload < expected:
        raise FormatError(f"truncated payload: header says {rows} x {cols} "
                          f"({rows * cols} floats), found {payload // 4}", path)
    if payload > expected:
        raise FormatError(f"{payload - expected} trailing bytes after {rows} x {cols} payload", path)
    values = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=VIB_HEADER.size)
    return SignalMatrix(values.astype(np.float64).reshape(rows, cols), float(rate), source=path)


def load_binary_matrix(path: PathLike) -> SignalMatrix:
    with open(path, "rb") as f:
        data = f.read()
    return decode_binary_matrix(data, str(path))


def is_binary_matrix(path: PathLike) -> bool:
    with open(path, "rb") as f:
        return f.read(4) == VIB_MAGIC


def load_signal(path: PathLike, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> SignalMatrix:
    """Load a VIB1 or text matrix, sniffing the magic bytes"""
    if is_binary_matrix(path):
        return load_binary_matrix(path)
    return load_text_matrix(path, sample_rate_hz)
