"""
Reference CPU operators for GhostNet / RepGhostNet inference.

Every operator takes and returns `Tensor` objects. Semantics are defined on
the logical (n, c, h, w) view, and the result keeps the layout of the first
input. Convolution is direct cross-correlation with zero padding.
"""
import time
import logging
from collections import Counter, defaultdict
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError
from .tensor_core import Layout, Tensor

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5


# ────────── parameter containers ──────────

@dataclass(frozen=True, eq=False)
class Conv2dParams:
    """Convolution weights of shape (c_out, c_in/groups, k_h, k_w) plus an optional bias."""
    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        weight = np.ascontiguousarray(self.weight, dtype=np.float32)
        if weight.ndim != 4 or min(weight.shape) < 1:
            raise ConfigError(f"Convolution weight must be a non-empty rank-4 array, got shape {weight.shape}")
        if self.groups < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigError(
                f"Invalid convolution settings: groups={self.groups}, stride={self.stride}, padding={self.padding}"
            )
        if weight.shape[0] % self.groups:
            raise ConfigError(f"c_out={weight.shape[0]} is not divisible by groups={self.groups}")
        object.__setattr__(self, "weight", weight)
        if self.bias is not None:
            bias = np.ascontiguousarray(self.bias, dtype=np.float32)
            if bias.shape != (weight.shape[0],):
                raise ConfigError(f"Bias shape {bias.shape} does not match c_out={weight.shape[0]}")
            object.__setattr__(self, "bias", bias)

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.c_in == self.c_out and self.weight.shape[1] == 1

    def output_hw(self, h: int, w: int):
        k_h, k_w = self.weight.shape[2:]
        return ((h + 2 * self.padding - k_h) // self.stride + 1,
                (w + 2 * self.padding - k_w) // self.stride + 1)


@dataclass(frozen=True, eq=False)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        vectors = {}
        for name in ("gamma", "beta", "running_mean", "running_var"):
            vec = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if vec.ndim != 1:
                raise ConfigError(f"BatchNorm {name} must be a vector, got shape {vec.shape}")
            vectors[name] = vec
        if len({v.shape[0] for v in vectors.values()}) != 1:
            raise ConfigError("BatchNorm vectors must all have the same length")
        if np.any(vectors["running_var"] < 0):
            raise ConfigError("BatchNorm running_var must be non-negative")
        # eps = 0 is accepted as long as every denominator stays positive
        if self.eps < 0 or np.any(vectors["running_var"].astype(np.float64) + self.eps <= 0):
            raise ConfigError(f"BatchNorm needs running_var + eps > 0 (eps={self.eps})")
        for name, vec in vectors.items():
            object.__setattr__(self, name, vec)

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def scale_shift(self):
        """Per-channel (scale, shift) in float64 such that bn(x) = scale * x + shift."""
        scale = self.gamma.astype(np.float64) / np.sqrt(self.running_var.astype(np.float64) + self.eps)
        shift = self.beta.astype(np.float64) - self.running_mean.astype(np.float64) * scale
        return scale, shift


@dataclass(frozen=True, eq=False)
class SEParams:
    reduce: Conv2dParams
    expand: Conv2dParams

    def __post_init__(self):
        for name, conv in (("reduce", self.reduce), ("expand", self.expand)):
            if conv.kernel_size != 1 or conv.groups != 1:
                raise ConfigError(f"SE {name} must be a dense 1x1 convolution")
        if self.reduce.c_in != self.expand.c_out or self.reduce.c_out != self.expand.c_in:
            raise ConfigError("SE reduce/expand channels do not match")
        if self.reduce.c_out < 4 or self.reduce.c_out % 4:
            raise ConfigError(f"SE reduced width must be >= 4 and divisible by 4, got {self.reduce.c_out}")

    @property
    def channels(self) -> int:
        return self.reduce.c_in


# ────────── operator profiling ──────────

class OpProfiler:
    """Accumulated wall-clock seconds and call counts per operator type."""

    def __init__(self):
        self.seconds = defaultdict(float)
        self.calls = Counter()
        self._depth = 0


_ACTIVE_PROFILER: ContextVar[Optional[OpProfiler]] = ContextVar("active_op_profiler", default=None)


@contextmanager
def profile_ops():
    """Time every top-level operator call made inside the block."""
    profiler = OpProfiler()
    token = _ACTIVE_PROFILER.set(profiler)
    try:
        yield profiler
    finally:
        _ACTIVE_PROFILER.reset(token)


@contextmanager
def _record(op_type: str):
    profiler = _ACTIVE_PROFILER.get()
    if profiler is None:
        yield
        return
    profiler._depth += 1
    start = time.perf_counter()
    try:
        yield
    finally:
        profiler._depth -= 1
        # operators nested inside another one (SE internals) belong to the outer op
        if profiler._depth == 0:
            profiler.seconds[op_type] += time.perf_counter() - start
            profiler.calls[op_type] += 1


# ────────── operators ──────────

def _conv2d_nchw(x: np.ndarray, p: Conv2dParams, h_out: int, w_out: int) -> np.ndarray:
    n = x.shape[0]
    k_h, k_w = p.weight.shape[2:]
    s = p.stride
    if p.padding:
        pad = p.padding
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))

    if p.is_depthwise:
        out = np.zeros((n, p.c_out, h_out, w_out), dtype=np.float32)
        for i in range(k_h):
            for j in range(k_w):
                window = x[:, :, i:i + s * (h_out - 1) + 1:s, j:j + s * (w_out - 1) + 1:s]
                out += window * p.weight[:, 0, i, j][None, :, None, None]
        return out

    if k_h == 1 and k_w == 1 and p.groups == 1:
        window = x[:, :, :s * (h_out - 1) + 1:s, :s * (w_out - 1) + 1:s]
        flat = np.ascontiguousarray(window).reshape(n, p.c_in, h_out * w_out)
        out = np.matmul(p.weight[:, :, 0, 0], flat)
        return out.reshape(n, p.c_out, h_out, w_out)

    windows = sliding_window_view(x, (k_h, k_w), axis=(2, 3))[:, :, ::s, ::s][:, :, :h_out, :w_out]
    cin_g = p.weight.shape[1]
    cout_g = p.c_out // p.groups
    out = np.empty((n, p.c_out, h_out, w_out), dtype=np.float32)
    for g in range(p.groups):
        part = windows[:, g * cin_g:(g + 1) * cin_g]
        kernel = p.weight[g * cout_g:(g + 1) * cout_g]
        # (n, h, w, o) after contracting channels and taps
        res = np.tensordot(part, kernel, axes=([1, 4, 5], [1, 2, 3]))
        out[:, g * cout_g:(g + 1) * cout_g] = np.transpose(res, (0, 3, 1, 2))
    return out


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    n, c, h, w = x.shape
    if c != p.c_in:
        raise ConfigError(f"Input has {c} channels but the convolution expects {p.c_in} (groups={p.groups})")
    h_out, w_out = p.output_hw(h, w)
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"Convolution output would be {h_out}x{w_out} for input {h}x{w}")
    with _record("dconv" if p.is_depthwise else "conv"):
        out = _conv2d_nchw(x.logical(), p, h_out, w_out)
        if p.bias is not None:
            out += p.bias[None, :, None, None]
        return Tensor.from_logical(out, x.layout)


def batch_norm_infer(x: Tensor, p: BatchNormParams) -> Tensor:
    if x.shape[1] != p.channels:
        raise ShapeError(f"Input has {x.shape[1]} channels, BatchNorm has {p.channels}")
    with _record("batch_norm"):
        scale = (p.gamma.astype(np.float64) / np.sqrt(p.running_var.astype(np.float64) + p.eps)).astype(np.float32)
        out = (x.logical() - p.running_mean[None, :, None, None]) * scale[None, :, None, None]
        out += p.beta[None, :, None, None]
        return Tensor.from_logical(out, x.layout)


def relu(x: Tensor) -> Tensor:
    with _record("relu"):
        return Tensor(np.maximum(x.data, np.float32(0.0)), x.layout)


def add_elementwise(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"Cannot add tensors of shapes {a.shape} and {b.shape}")
    if a.layout is not b.layout:
        b = Tensor.from_logical(b.logical(), a.layout)
    with _record("add"):
        return Tensor(np.add(a.data, b.data), a.layout)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Channel concatenation as a physical copy in the inputs' layout."""
    n, c_a, h, w = a.shape
    if (b.shape[0], b.shape[2], b.shape[3]) != (n, h, w) or a.layout is not b.layout:
        raise ShapeError(f"Cannot concatenate {a.shape}/{a.layout.value} with {b.shape}/{b.layout.value}")
    c_b = b.shape[1]
    with _record("concat"):
        if a.layout is Layout.NCHW:
            out = np.empty((n, c_a + c_b, h, w), dtype=np.float32)
            # one contiguous block per input and sample
            for i in range(n):
                out[i, :c_a] = a.data[i]
                out[i, c_a:] = b.data[i]
        else:
            out = np.empty((n, h, w, c_a + c_b), dtype=np.float32)
            # per-pixel runs of c_a and c_b values
            out[..., :c_a] = a.data
            out[..., c_a:] = b.data
        return Tensor(out, a.layout)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"Channel slice [{start}:{stop}] is out of range for {x.shape[1]} channels")
    return Tensor.from_logical(x.logical()[:, start:stop], x.layout)


def global_avg_pool(x: Tensor) -> Tensor:
    with _record("avgpool"):
        out = x.logical().mean(axis=(2, 3), keepdims=True, dtype=np.float64)
        return Tensor.from_logical(out.astype(np.float32), x.layout)


def hard_sigmoid(x: Tensor) -> Tensor:
    with _record("hard_sigmoid"):
        return Tensor(np.clip((x.data + np.float32(3.0)) / np.float32(6.0), 0.0, 1.0), x.layout)


def se_forward(x: Tensor, p: SEParams) -> Tensor:
    if x.shape[1] != p.channels:
        raise ShapeError(f"Input has {x.shape[1]} channels, SE block expects {p.channels}")
    with _record("se"):
        gate = hard_sigmoid(conv2d(relu(conv2d(global_avg_pool(x), p.reduce)), p.expand))
        out = x.logical() * gate.logical()
        return Tensor.from_logical(out, x.layout)
