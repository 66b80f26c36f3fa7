"""
Dense rank-4 tensors with an explicit physical layout.

Elements are always addressed logically as (n, c, h, w). The physical array
is stored in the order of the tensor's layout, so an NHWC tensor keeps the
channels of one pixel next to each other in memory.
"""
import math
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import ShapeError

logger = logging.getLogger(__name__)

_U64_MASK = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_MUL2 = np.uint64(0x94D049BB133111EB)


class Layout(str, Enum):
    NCHW = "nchw"
    NHWC = "nhwc"


# Axis order that maps a logical NCHW array onto the physical array and back.
_TO_PHYSICAL = {Layout.NCHW: (0, 1, 2, 3), Layout.NHWC: (0, 2, 3, 1)}
_TO_LOGICAL = {Layout.NCHW: (0, 1, 2, 3), Layout.NHWC: (0, 3, 1, 2)}


def _check_shape(shape) -> Tuple[int, int, int, int]:
    if len(shape) != 4:
        raise ShapeError(f"Expected a rank-4 shape (n, c, h, w), got {tuple(shape)}")
    dims = tuple(int(d) for d in shape)
    if any(d < 1 for d in dims):
        raise ShapeError(f"All dimensions must be >= 1, got {dims}")
    return dims


class Rng:
    """splitmix64 stream; the same seed yields the same values on every platform."""

    def __init__(self, seed: int):
        self.state = int(seed) & _U64_MASK

    def next_u64(self, count: int) -> np.ndarray:
        steps = np.arange(1, count + 1, dtype=np.uint64)
        # uint64 array arithmetic wraps modulo 2**64
        z = steps * np.uint64(_SPLITMIX_GAMMA) + np.uint64(self.state)
        z = (z ^ (z >> np.uint64(30))) * _SPLITMIX_MUL1
        z = (z ^ (z >> np.uint64(27))) * _SPLITMIX_MUL2
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * _SPLITMIX_GAMMA) & _U64_MASK
        return z

    def uniform(self, shape) -> np.ndarray:
        """Float32 values drawn uniformly from [-0.5, 0.5], filled in C order."""
        count = int(math.prod(shape))
        bits = self.next_u64(count) >> np.uint64(11)
        values = bits.astype(np.float64) * (1.0 / (1 << 53)) - 0.5
        return values.astype(np.float32).reshape(shape)


@dataclass(frozen=True, eq=False)
class Tensor:
    """Float32 tensor. `data` is the physical array in `layout` order; callers hand over the buffer."""
    data: np.ndarray
    layout: Layout = Layout.NCHW

    def __post_init__(self):
        layout = Layout(self.layout)
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 4:
            raise ShapeError(f"Tensor data must be rank 4, got rank {data.ndim}")
        if any(d < 1 for d in data.shape):
            raise ShapeError(f"All dimensions must be >= 1, got {data.shape}")
        # the tensor takes ownership of the buffer; its own view is read-only
        data = data.view()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "layout", layout)

    @classmethod
    def from_logical(cls, array: np.ndarray, layout: Layout = Layout.NCHW) -> "Tensor":
        """Build a tensor from a logical (n, c, h, w) array."""
        array = np.asarray(array, dtype=np.float32)
        if array.ndim != 4:
            raise ShapeError(f"Expected a rank-4 array, got rank {array.ndim}")
        return cls(np.transpose(array, _TO_PHYSICAL[Layout(layout)]), layout)

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return tuple(self.data.shape[i] for i in _TO_LOGICAL[self.layout])

    @property
    def flat(self) -> np.ndarray:
        """Physical element sequence."""
        return self.data.reshape(-1)

    def logical(self) -> np.ndarray:
        """Read-only (n, c, h, w) view of the data."""
        return np.transpose(self.data, _TO_LOGICAL[self.layout])

    def at(self, i: int, j: int, y: int, x: int) -> float:
        if self.layout is Layout.NCHW:
            return float(self.data[i, j, y, x])
        return float(self.data[i, y, x, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.logical(), other.logical())

    __hash__ = None


def tensor_from_seed(shape, layout: Layout = Layout.NCHW, seed: int = 0) -> Tensor:
    """Deterministic tensor with values uniform in [-0.5, 0.5], generated in physical order."""
    dims = _check_shape(shape)
    layout = Layout(layout)
    physical = tuple(dims[i] for i in _TO_PHYSICAL[layout])
    return Tensor(Rng(seed).uniform(physical), layout)


def layout_convert(t: Tensor, target: Layout) -> Tensor:
    target = Layout(target)
    if target is t.layout:
        return t
    return Tensor.from_logical(t.logical(), target)


def max_abs_diff(a: Tensor, b: Tensor) -> float:
    """Largest absolute difference over all logical positions."""
    if a.shape != b.shape:
        raise ShapeError(f"Shape mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a.logical().astype(np.float64) - b.logical().astype(np.float64))
    return float(diff.max())
