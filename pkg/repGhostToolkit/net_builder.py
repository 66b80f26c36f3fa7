"""
GhostNet and RepGhostNet construction, whole-network conversion, and
parameter / FLOPs accounting.

Both networks share one skeleton read from `architecture.txt`: a stem conv,
a stack of bottlenecks, a 1x1 conv, global pooling and a 1x1 conv head.
"""
import logging
import dataclasses
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib.resources import files
from typing import Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from .errors import ConfigError, ShapeError
from .initializers import ParamFactory
from .nn_ops import (
    BatchNormParams,
    Conv2dParams,
    SEParams,
    add_elementwise,
    batch_norm_infer,
    concat_channels,
    conv2d,
    global_avg_pool,
    relu,
    se_forward,
)
from .reparam import (
    DEFAULT_VARIANT,
    REPARAM_VARIANTS,
    RepGhostModuleDeploy,
    RepGhostModuleTrain,
    build_repghost_module,
    fold_bn_into_conv,
    forward_deploy,
    forward_train,
    fuse_module,
    verify_equivalence,
)
from .tensor_core import Tensor

logger = logging.getLogger(__name__)

CHANNEL_DIVISOR = 4
SE_RATIO = 0.25
DEFAULT_ARCH_FILE = "architecture.txt"
DEFAULT_ARCH_BLOCK = "repghostnet"
DEFAULT_INPUT_HW = (224, 224)


def make_divisible(c: float, divisor: int = CHANNEL_DIVISOR, min_value: Optional[int] = None) -> int:
    """Round to the nearest multiple of divisor without dropping more than 10%."""
    if min_value is None:
        min_value = divisor
    new_c = max(min_value, int(c + divisor / 2) // divisor * divisor)
    if new_c < 0.9 * c:
        new_c += divisor
    return new_c


# ────────── declarative architecture ──────────

class BottleneckSpec(BaseModel):
    """One bottleneck row of the architecture table."""
    c_mid_half: int = Field(..., gt=0, description="#mid column: half of the bottleneck's C_mid")
    c_out: int = Field(..., gt=0, description="#out column")
    use_se: bool = Field(False, description="Whether the bottleneck carries an SE block")
    stride: Literal[1, 2] = Field(1, description="Stride of the bottleneck")
    input_hw: Optional[int] = Field(None, description="Spatial input size at 224x224 (informational)")
    in_channels: Optional[int] = Field(None, description="Input channels at width 1.0 (informational)")


class ArchitectureTable(BaseModel):
    rows: List[BottleneckSpec]
    stem_channels: int = 16
    head_channels: int = 960
    fc_channels: int = 1280
    num_classes: int = 1000


class NetworkSpec(BaseModel):
    """Everything needed to rebuild a network's structure."""
    arch: Literal["repghost", "ghost"] = Field(..., description="Bottleneck family")
    rows: List[BottleneckSpec] = Field(..., min_length=1, description="Bottleneck rows in execution order")
    width: float = Field(1.0, gt=0, description="Width multiplier alpha")
    use_shortcut: bool = Field(True, description="Keep identity shortcuts (downsample shortcuts always stay)")
    variant: str = Field(DEFAULT_VARIANT, description="Re-parameterization branch set (repghost only)")
    reuse: Literal["concat", "add"] = Field("concat", description="Feature reuse operator (ghost only)")
    stem_channels: int = 16
    head_channels: int = 960
    fc_channels: int = 1280
    num_classes: int = 1000


def _parse_table(lines: List[str], source: str) -> ArchitectureTable:
    rows = []
    head_convs = []
    stem = None
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0] == "input":
            continue
        if len(parts) != 6:
            raise ConfigError(f"{source}:{lineno}: expected 6 columns, got {len(parts)}: '{line.strip()}'")
        size, operator, mid, out, se, stride = parts
        if operator == "RG-bneck":
            hw, channels = size.split("^2x")
            rows.append(BottleneckSpec(c_mid_half=int(mid), c_out=int(out), use_se=se != "-",
                                       stride=int(stride), input_hw=int(hw), in_channels=int(channels)))
        elif operator == "Conv3x3" and not rows:
            stem = int(out)
        elif operator == "Conv1x1":
            head_convs.append(int(out))
        elif operator != "AvgPool":
            raise ConfigError(f"{source}:{lineno}: unknown operator '{operator}'")
    if stem is None or len(head_convs) != 3 or not rows:
        raise ConfigError(f"{source}: table needs a Conv3x3 stem, bottleneck rows and three Conv1x1 head rows")
    return ArchitectureTable(rows=rows, stem_channels=stem, head_channels=head_convs[0],
                             fc_channels=head_convs[1], num_classes=head_convs[2])


def load_architecture(path: Optional[str] = None, identifier: str = DEFAULT_ARCH_BLOCK) -> ArchitectureTable:
    """Read the '# <identifier>' block of an architecture table file."""
    if path is None:
        content = files("repGhostToolkit").joinpath(DEFAULT_ARCH_FILE).read_text(encoding="utf-8")
        source = DEFAULT_ARCH_FILE
    else:
        with open(path, "r", encoding="utf-8") as f:
            content = f.read()
        source = path
    content = content.lstrip("\ufeff")

    block = []
    capture = False
    for line in content.splitlines():
        if line.strip().startswith("#"):
            if capture:
                break
            capture = line.strip().lstrip("#").strip() == identifier
            continue
        if capture:
            block.append(line)
    if not block:
        raise ConfigError(f"No '# {identifier}' block found in {source}")
    table = _parse_table(block, source)
    if len(table.rows) != 16:
        logger.warning("Architecture '%s' has %d bottleneck rows (the reference table has 16)",
                       identifier, len(table.rows))
    return table


def make_network_spec(arch: str, width: float, use_shortcut: bool = True, variant: str = DEFAULT_VARIANT,
                      reuse: str = "concat", table: Optional[ArchitectureTable] = None) -> NetworkSpec:
    if not width > 0:
        raise ConfigError(f"Width multiplier must be > 0, got {width}")
    if variant not in REPARAM_VARIANTS:
        raise ConfigError(f"Unknown re-parameterization variant '{variant}'. Choose from {sorted(REPARAM_VARIANTS)}")
    table = table or load_architecture()
    return NetworkSpec(arch=arch, width=width, use_shortcut=use_shortcut, variant=variant, reuse=reuse,
                       **table.model_dump())


# ────────── network structure ──────────

@dataclass(frozen=True, eq=False)
class ConvBnAct:
    conv: Conv2dParams
    bn: Optional[BatchNormParams] = None
    relu: bool = False


@dataclass(frozen=True, eq=False)
class GhostModule:
    """Primary conv plus cheap depthwise conv, joined by concat or, in the add-reuse form, by add."""
    primary: ConvBnAct
    cheap: ConvBnAct
    reuse: str = "concat"

    @property
    def in_channels(self) -> int:
        return self.primary.conv.c_in

    @property
    def out_channels(self) -> int:
        c = self.primary.conv.c_out
        return 2 * c if self.reuse == "concat" else c


Module = Union[GhostModule, RepGhostModuleTrain, RepGhostModuleDeploy]


@dataclass(frozen=True, eq=False)
class Bottleneck:
    module1: Module
    module2: Module
    dw: Optional[ConvBnAct] = None
    se: Optional[SEParams] = None
    downsample: Optional[Tuple[ConvBnAct, ConvBnAct]] = None
    shortcut_enabled: bool = True

    @property
    def has_shortcut(self) -> bool:
        return self.downsample is not None or self.shortcut_enabled


@dataclass(frozen=True, eq=False)
class Network:
    spec: NetworkSpec
    stem: ConvBnAct
    blocks: Tuple[Bottleneck, ...]
    head: ConvBnAct
    fc: ConvBnAct
    classifier: ConvBnAct

    @property
    def in_channels(self) -> int:
        return self.stem.conv.c_in

    @property
    def out_channels(self) -> int:
        return self.classifier.conv.c_out


# ────────── builders ──────────

def _ghost_module(factory: ParamFactory, c_in: int, c_out: int, relu_on: bool, reuse: str) -> GhostModule:
    if reuse == "concat":
        if c_out % 2:
            raise ConfigError(f"Ghost module output width must be even, got {c_out}")
        width = c_out // 2
    else:
        width = c_out
    primary = ConvBnAct(factory.conv(c_in, width, 1), factory.bn(width), relu_on)
    cheap = ConvBnAct(factory.conv(width, width, 3, groups=width), factory.bn(width), relu_on)
    return GhostModule(primary, cheap, reuse)


def _bottleneck(factory: ParamFactory, spec: NetworkSpec, c_in: int, row: BottleneckSpec) -> Bottleneck:
    mid = make_divisible(row.c_mid_half * spec.width)
    c_out = make_divisible(row.c_out * spec.width)
    if spec.arch == "repghost":
        module1 = build_repghost_module(factory, c_in, mid, relu=True, variant=spec.variant)
        inner = mid
    else:
        inner = 2 * mid
        module1 = _ghost_module(factory, c_in, inner, True, spec.reuse)

    dw = None
    if row.stride > 1:
        dw = ConvBnAct(factory.conv(inner, inner, 3, stride=row.stride, groups=inner), factory.bn(inner))
    se = factory.se(inner, make_divisible(inner * SE_RATIO)) if row.use_se else None

    if spec.arch == "repghost":
        module2 = build_repghost_module(factory, inner, c_out, relu=False, variant=spec.variant)
    else:
        module2 = _ghost_module(factory, inner, c_out, False, spec.reuse)

    if c_in == c_out and row.stride == 1:
        return Bottleneck(module1, module2, dw, se, None, spec.use_shortcut)
    downsample = (
        ConvBnAct(factory.conv(c_in, c_in, 3, stride=row.stride, groups=c_in), factory.bn(c_in)),
        ConvBnAct(factory.conv(c_in, c_out, 1), factory.bn(c_out)),
    )
    return Bottleneck(module1, module2, dw, se, downsample, True)


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    factory = ParamFactory(seed)
    stem_c = make_divisible(spec.stem_channels * spec.width)
    stem = ConvBnAct(factory.conv(3, stem_c, 3, stride=2), factory.bn(stem_c), True)

    blocks = []
    c_in = stem_c
    for row in spec.rows:
        block = _bottleneck(factory, spec, c_in, row)
        blocks.append(block)
        c_in = block.module2.out_channels

    head_c = make_divisible(spec.head_channels * spec.width)
    head = ConvBnAct(factory.conv(c_in, head_c, 1), factory.bn(head_c), True)
    # the 1280-wide conv is not scaled by the width multiplier
    fc = ConvBnAct(factory.conv(head_c, spec.fc_channels, 1, bias=True), None, True)
    classifier = ConvBnAct(factory.conv(spec.fc_channels, spec.num_classes, 1, bias=True))
    net = Network(spec, stem, tuple(blocks), head, fc, classifier)
    logger.info("Built %s %.2fx (seed %d): %d bottlenecks", spec.arch, spec.width, seed, len(blocks))
    return net


def build_repghostnet(width: float = 1.0, use_shortcut: bool = True, seed: int = 0,
                      variant: str = DEFAULT_VARIANT, table: Optional[ArchitectureTable] = None) -> Network:
    return build_network(make_network_spec("repghost", width, use_shortcut, variant, table=table), seed)


def build_ghostnet(width: float = 1.0, seed: int = 0, reuse: str = "concat",
                   table: Optional[ArchitectureTable] = None) -> Network:
    return build_network(make_network_spec("ghost", width, reuse=reuse, table=table), seed)


# ────────── forward ──────────

def _cba_forward(layer: ConvBnAct, x: Tensor) -> Tensor:
    y = conv2d(x, layer.conv)
    if layer.bn is not None:
        y = batch_norm_infer(y, layer.bn)
    return relu(y) if layer.relu else y


def module_forward(m: Module, x: Tensor) -> Tensor:
    if isinstance(m, RepGhostModuleTrain):
        return forward_train(m, x)
    if isinstance(m, RepGhostModuleDeploy):
        return forward_deploy(m, x)
    x1 = _cba_forward(m.primary, x)
    x2 = _cba_forward(m.cheap, x1)
    return concat_channels(x1, x2) if m.reuse == "concat" else add_elementwise(x1, x2)


def bottleneck_forward(b: Bottleneck, x: Tensor) -> Tensor:
    out = module_forward(b.module1, x)
    if b.dw is not None:
        out = _cba_forward(b.dw, out)
    if b.se is not None:
        out = se_forward(out, b.se)
    out = module_forward(b.module2, out)
    if b.downsample is not None:
        return add_elementwise(out, _cba_forward(b.downsample[1], _cba_forward(b.downsample[0], x)))
    if b.shortcut_enabled:
        return add_elementwise(out, x)
    return out


def _forward_single(net: Network, x: Tensor) -> Tensor:
    y = _cba_forward(net.stem, x)
    for block in net.blocks:
        y = bottleneck_forward(block, y)
    y = global_avg_pool(_cba_forward(net.head, y))
    return _cba_forward(net.classifier, _cba_forward(net.fc, y))


def network_forward(net: Network, x: Tensor, threads: int = 1) -> Tensor:
    """Logits of shape (n, num_classes, 1, 1). threads > 1 splits the batch over a thread pool."""
    if x.shape[1] != net.in_channels:
        raise ShapeError(f"Network expects {net.in_channels} input channels, got {x.shape[1]}")
    n = x.shape[0]
    if threads <= 1 or n == 1:
        return _forward_single(net, x)
    chunks = [idx for idx in np.array_split(np.arange(n), min(threads, n))]
    logical = x.logical()
    parts = [Tensor.from_logical(logical[idx[0]:idx[-1] + 1], x.layout) for idx in chunks]
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        outputs = list(pool.map(lambda part: _forward_single(net, part), parts))
    return Tensor.from_logical(np.concatenate([o.logical() for o in outputs], axis=0), x.layout)


# ────────── conversion ──────────

def _fold_cba(layer: ConvBnAct) -> ConvBnAct:
    if layer.bn is None:
        return layer
    return ConvBnAct(fold_bn_into_conv(layer.conv, layer.bn), None, layer.relu)


def _convert_module(m: Module) -> Module:
    if isinstance(m, RepGhostModuleTrain):
        return fuse_module(m)
    if isinstance(m, RepGhostModuleDeploy):
        return m
    return GhostModule(_fold_cba(m.primary), _fold_cba(m.cheap), m.reuse)


def convert_network(net: Network) -> Network:
    """Fuse every RepGhost module and fold every remaining conv+BN pair."""
    blocks = []
    for i, b in enumerate(net.blocks):
        try:
            module1 = _convert_module(b.module1)
            module2 = _convert_module(b.module2)
        except ConfigError as e:
            raise ConfigError(f"Bottleneck {i}: {e}") from e
        blocks.append(Bottleneck(
            module1,
            module2,
            _fold_cba(b.dw) if b.dw is not None else None,
            b.se,
            tuple(_fold_cba(layer) for layer in b.downsample) if b.downsample is not None else None,
            b.shortcut_enabled,
        ))
    converted = Network(net.spec, _fold_cba(net.stem), tuple(blocks), _fold_cba(net.head),
                        _fold_cba(net.fc), _fold_cba(net.classifier))
    logger.info("Converted %s %.2fx to its deploy form", net.spec.arch, net.spec.width)
    return converted


def verify_network(net: Network, deploy: Optional[Network] = None, trials: int = 5, tol: float = 1e-4,
                   input_hw: Tuple[int, int] = DEFAULT_INPUT_HW, seed: int = 0, threads: int = 1):
    """Compare a training-form network with its converted form on seeded inputs."""
    deploy = deploy or convert_network(net)
    return verify_equivalence(net, deploy, trials=trials, tol=tol, input_shape=(1, 3) + tuple(input_hw),
                              seed=seed, forward=lambda form, x: network_forward(form, x, threads))


# ────────── static tracing and accounting ──────────

@dataclass(frozen=True)
class OpRecord:
    kind: str
    scope: str
    in_shapes: Tuple[Tuple[int, int, int, int], ...]
    out_shape: Tuple[int, int, int, int]
    conv: Optional[Conv2dParams] = dataclasses.field(default=None, compare=False)


@dataclass(frozen=True)
class ConcatSite:
    scope: str
    m1_shape: Tuple[int, int, int, int]
    m2_shape: Tuple[int, int, int, int]


class _Tracer:
    """Shape-only walk of a network that records every operator."""

    def __init__(self):
        self.records: List[OpRecord] = []

    def emit(self, kind, scope, in_shapes, out_shape, conv=None):
        self.records.append(OpRecord(kind, scope, tuple(in_shapes), out_shape, conv))
        return out_shape

    def conv(self, scope, conv: Conv2dParams, shape):
        n, _, h, w = shape
        h_out, w_out = conv.output_hw(h, w)
        return self.emit("dconv" if conv.is_depthwise else "conv", scope, [shape], (n, conv.c_out, h_out, w_out), conv)

    def cba(self, scope, layer: ConvBnAct, shape):
        shape = self.conv(scope, layer.conv, shape)
        if layer.bn is not None:
            self.emit("batch_norm", scope, [shape], shape)
        if layer.relu:
            self.emit("relu", scope, [shape], shape)
        return shape

    def module(self, scope, m: Module, shape):
        if isinstance(m, RepGhostModuleDeploy):
            shape = self.conv(scope, m.primary, shape)
            if m.primary_relu:
                self.emit("relu", scope, [shape], shape)
            shape = self.conv(scope, m.fused_dconv, shape)
            if m.final_relu:
                self.emit("relu", scope, [shape], shape)
            return shape
        if isinstance(m, RepGhostModuleTrain):
            shape = self.conv(scope, m.primary_conv, shape)
            self.emit("batch_norm", scope, [shape], shape)
            if m.primary_relu:
                self.emit("relu", scope, [shape], shape)
            for branch in m.branches:
                if branch.conv is not None:
                    self.conv(scope, branch.conv, shape)
                if branch.bn is not None:
                    self.emit("batch_norm", scope, [shape], shape)
                if branch.relu:
                    self.emit("relu", scope, [shape], shape)
            for _ in range(len(m.branches) - 1):
                self.emit("add", scope, [shape, shape], shape)
            if m.final_relu:
                self.emit("relu", scope, [shape], shape)
            return shape
        m1 = self.cba(scope, m.primary, shape)
        m2 = self.cba(scope, m.cheap, m1)
        if m.reuse == "concat":
            return self.emit("concat", scope, [m1, m2], (m1[0], m1[1] + m2[1], m1[2], m1[3]))
        return self.emit("add", scope, [m1, m2], m1)

    def se(self, scope, se: SEParams, shape):
        n, c = shape[:2]
        pooled = self.emit("avgpool", scope, [shape], (n, c, 1, 1))
        red = self.conv(scope, se.reduce, pooled)
        self.emit("relu", scope, [red], red)
        gate = self.conv(scope, se.expand, red)
        self.emit("hard_sigmoid", scope, [gate], gate)
        return self.emit("scale", scope, [shape, gate], shape)

    def network(self, net: Network, shape):
        shape = self.cba("stem", net.stem, shape)
        for i, b in enumerate(net.blocks):
            scope = f"blocks.{i}"
            residual = shape
            shape = self.module(f"{scope}.module1", b.module1, shape)
            if b.dw is not None:
                shape = self.cba(f"{scope}.dw", b.dw, shape)
            if b.se is not None:
                shape = self.se(f"{scope}.se", b.se, shape)
            shape = self.module(f"{scope}.module2", b.module2, shape)
            if b.downsample is not None:
                residual = self.cba(f"{scope}.downsample", b.downsample[1],
                                    self.cba(f"{scope}.downsample", b.downsample[0], residual))
            if b.has_shortcut:
                self.emit("add", f"{scope}.shortcut", [shape, residual], shape)
        shape = self.cba("head", net.head, shape)
        shape = self.emit("avgpool", "pool", [shape], (shape[0], shape[1], 1, 1))
        shape = self.cba("fc", net.fc, shape)
        return self.cba("classifier", net.classifier, shape)


def trace_network(net: Network, input_hw: Tuple[int, int] = DEFAULT_INPUT_HW, batch: int = 1) -> List[OpRecord]:
    tracer = _Tracer()
    tracer.network(net, (batch, net.in_channels) + tuple(input_hw))
    return tracer.records


def count_operators(net: Network, input_hw: Tuple[int, int] = DEFAULT_INPUT_HW) -> Counter:
    return Counter(record.kind for record in trace_network(net, input_hw))


def intra_module_joins(net: Network) -> int:
    """Adds and concats inside modules (shortcut adds excluded)."""
    return sum(1 for r in trace_network(net) if r.kind in ("add", "concat") and ".module" in r.scope)


def _module_paths(m: Module) -> int:
    if isinstance(m, RepGhostModuleTrain):
        return len(m.branches)
    if isinstance(m, RepGhostModuleDeploy):
        return 1
    return 2


def bottleneck_branch_counts(net: Network) -> List[int]:
    """Number of distinct input-to-output paths through each bottleneck."""
    return [_module_paths(b.module1) * _module_paths(b.module2) + int(b.has_shortcut) for b in net.blocks]


def enumerate_concat_sites(net: Network, input_hw: Tuple[int, int] = DEFAULT_INPUT_HW,
                           batch: int = 1) -> List[ConcatSite]:
    return [ConcatSite(r.scope, r.in_shapes[0], r.in_shapes[1])
            for r in trace_network(net, input_hw, batch) if r.kind == "concat"]


def conv_macs(conv: Conv2dParams, input_hw: Tuple[int, int]) -> int:
    h_out, w_out = conv.output_hw(*input_hw)
    k_h, k_w = conv.weight.shape[2:]
    return conv.c_out * h_out * w_out * (conv.c_in // conv.groups) * k_h * k_w


def count_flops(net: Network, input_hw: Tuple[int, int] = DEFAULT_INPUT_HW, fused: bool = True) -> int:
    """Multiply-accumulates of every conv (heads included) for one sample."""
    target = convert_network(net) if fused and not is_deploy(net) else net
    return sum(conv_macs(r.conv, r.in_shapes[0][2:]) for r in trace_network(target, input_hw) if r.conv is not None)


def _walk_arrays(obj, prefix: str) -> Iterator[Tuple[str, np.ndarray]]:
    if isinstance(obj, np.ndarray):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            yield from _walk_arrays(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (tuple, list)):
        for i, item in enumerate(obj):
            yield from _walk_arrays(item, f"{prefix}.{i}")


def named_parameters(net: Network) -> List[Tuple[str, np.ndarray]]:
    """Every array of the network under a dotted name, in a fixed order."""
    return list(_walk_arrays(net, ""))


def is_bn_entry(name: str) -> bool:
    return any(part.endswith("bn") for part in name.split("."))


def is_deploy(net: Network) -> bool:
    return not any(is_bn_entry(name) for name, _ in named_parameters(net))


def _rebuild(obj, prefix: str, mapping: Dict[str, np.ndarray]):
    if isinstance(obj, np.ndarray):
        return mapping[prefix]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        changes = {f.name: _rebuild(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name, mapping)
                   for f in dataclasses.fields(obj)}
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, tuple):
        return tuple(_rebuild(item, f"{prefix}.{i}", mapping) for i, item in enumerate(obj))
    return obj


def load_parameters(net: Network, mapping: Dict[str, np.ndarray]) -> Network:
    """Return a copy of `net` with every array replaced; all shapes are checked before anything is built."""
    expected = named_parameters(net)
    for name, array in expected:
        if name not in mapping:
            raise ConfigError(f"Missing tensor '{name}'")
        if tuple(mapping[name].shape) != array.shape:
            raise ConfigError(f"Shape mismatch for '{name}': expected {array.shape}, got {tuple(mapping[name].shape)}")
    extra = set(mapping) - {name for name, _ in expected}
    if extra:
        raise ConfigError(f"Unexpected tensor '{sorted(extra)[0]}'")
    return _rebuild(net, "", mapping)


def count_params(net, fused: bool = True) -> int:
    """
    Trainable scalars: conv weights and biases plus BN gamma/beta (running statistics excluded).
    Accepts a `Network` or any single layer container such as `ConvBnAct`.
    """
    target = net
    if fused and isinstance(net, Network) and not is_deploy(net):
        target = convert_network(net)
    return sum(array.size for name, array in named_parameters(target)
               if not name.endswith(("running_mean", "running_var")))


def has_unfusible_modules(net: Network) -> bool:
    return any(isinstance(m, RepGhostModuleTrain) and any(b.relu for b in m.branches)
               for block in net.blocks for m in (block.module1, block.module2))


__all__ = [
    "ArchitectureTable", "BottleneckSpec", "NetworkSpec", "Network", "Bottleneck", "ConvBnAct", "GhostModule",
    "OpRecord", "ConcatSite", "make_divisible", "load_architecture", "make_network_spec", "build_network",
    "build_repghostnet", "build_ghostnet", "module_forward", "bottleneck_forward", "network_forward",
    "convert_network", "verify_network", "trace_network", "count_operators", "intra_module_joins",
    "bottleneck_branch_counts", "enumerate_concat_sites", "conv_macs", "count_flops", "count_params",
    "named_parameters", "load_parameters", "is_deploy", "is_bn_entry", "has_unfusible_modules",
]
