"""
Dense tensor value type and the few numeric primitives the layers build on.

A Tensor is a C-ordered (row-major) float64 numpy array of rank 1 to 3, so
element (i, j, k) lives at flat offset i*D2*D3 + j*D3 + k. Randomness comes
from Rng, a thin owner of numpy's PCG64 generator (128-bit LCG state with a
64-bit permuted output), which produces the same stream on every platform
for a given seed.
"""

from typing import Any, Dict, Sequence, Tuple

import numpy as np

from core.errors import ShapeError

Tensor = np.ndarray

DTYPE = np.float64
MAX_RANK = 3


def _checked_shape(shape: Sequence[int]) -> Tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not 1 <= len(dims) <= MAX_RANK:
        raise ShapeError(f"tensor rank must be 1..{MAX_RANK}, got shape {list(dims)}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dimensions must be >= 1, got shape {list(dims)}")
    return dims


def as_tensor(values: Any) -> Tensor:
    """Copy values into a contiguous float64 tensor of rank 1..3"""
    arr = np.array(values, dtype=DTYPE, order="C")
    _checked_shape(arr.shape)
    return arr


def tensor_filled(shape: Sequence[int], value: float) -> Tensor:
    """Tensor of the given shape with every element equal to value"""
    return np.full(_checked_shape(shape), value, dtype=DTYPE)


def flat_index(shape: Sequence[int], index: Sequence[int]) -> int:
    """Row-major flat offset of a multi-index"""
    dims = _checked_shape(shape)
    if len(index) != len(dims):
        raise ShapeError(f"index {list(index)} does not match rank {len(dims)}")
    offset = 0
    for dim, i in zip(dims, index):
        if not 0 <= i < dim:
            raise ShapeError(f"index {list(index)} out of range for shape {list(dims)}")
        offset = offset * dim + i
    return offset


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard matrix product of two rank-2 tensors"""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {list(a.shape)} and {list(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {list(a.shape)} x {list(b.shape)}")
    return a @ b


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two tensors of identical shape"""
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shapes differ: {list(a.shape)} vs {list(b.shape)}")
    return a * b


class Rng:
    """Seedable deterministic generator; single owner, never shared between threads"""

    ALGORITHM = "PCG64"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, shape: Sequence[int], lo: float = 0.0, hi: float = 1.0) -> Tensor:
        if not lo < hi:
            raise ValueError(f"uniform bounds need lo < hi, got lo={lo} hi={hi}")
        return self._gen.uniform(lo, hi, size=_checked_shape(shape))

    def normal(self, shape: Sequence[int], std: float = 1.0) -> Tensor:
        return self._gen.normal(0.0, std, size=_checked_shape(shape))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices out of range(n)"""
        return self._gen.choice(n, size=k, replace=False)

    def get_state(self) -> Dict[str, Any]:
        return self._gen.bit_generator.state

    def set_state(self, state: Dict[str, Any]):
        self._gen.bit_generator.state = state


def rng_uniform(rng: Rng, shape: Sequence[int], lo: float, hi: float) -> Tensor:
    """i.i.d. uniform draws in [lo, hi), advancing the generator"""
    return rng.uniform(shape, lo, hi)
