"""
RepGhost module in its training form (parallel branches summed by add) and
its deploy form (1x1 conv -> depthwise 3x3 conv), plus the weight-space
fusion that turns one into the other.

All fusion arithmetic runs in float64; results are stored as float32.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .errors import ConfigError, ShapeError
from .nn_ops import (
    BatchNormParams,
    Conv2dParams,
    add_elementwise,
    batch_norm_infer,
    conv2d,
    relu,
)
from .tensor_core import Tensor, max_abs_diff, tensor_from_seed

logger = logging.getLogger(__name__)

FUSED_KERNEL_SIZE = 3


class BranchKind(str, Enum):
    DCONV3x3_BN = "dconv3x3_bn"
    IDENTITY = "identity"
    BN_ONLY = "bn"
    DCONV1x1_BN = "dconv1x1_bn"


@dataclass(frozen=True, eq=False)
class Branch:
    """One parallel branch applied to the primary output."""
    kind: BranchKind
    conv: Optional[Conv2dParams] = None
    bn: Optional[BatchNormParams] = None
    # only the "+ReLU" ablation sets this; such a module cannot be fused
    relu: bool = False

    def __post_init__(self):
        kind = BranchKind(self.kind)
        object.__setattr__(self, "kind", kind)
        needs_conv = kind in (BranchKind.DCONV3x3_BN, BranchKind.DCONV1x1_BN)
        needs_bn = kind is not BranchKind.IDENTITY
        if needs_conv != (self.conv is not None) or needs_bn != (self.bn is not None):
            raise ConfigError(f"Branch {kind.value} has the wrong set of parameters")
        if self.conv is not None:
            expected_k = 3 if kind is BranchKind.DCONV3x3_BN else 1
            if not self.conv.is_depthwise or self.conv.kernel_size != expected_k or self.conv.stride != 1:
                raise ConfigError(f"Branch {kind.value} needs a stride-1 depthwise {expected_k}x{expected_k} conv")
            if self.conv.padding != expected_k // 2:
                raise ConfigError(f"Branch {kind.value} needs padding {expected_k // 2}")
            if self.bn.channels != self.conv.c_out:
                raise ConfigError(f"Branch {kind.value}: BatchNorm width does not match the conv")
        if self.relu and kind is not BranchKind.DCONV3x3_BN:
            raise ConfigError("Only the dconv branch may carry a ReLU")

    @property
    def channels(self) -> Optional[int]:
        if self.conv is not None:
            return self.conv.c_out
        if self.bn is not None:
            return self.bn.channels
        return None


@dataclass(frozen=True, eq=False)
class RepGhostModuleTrain:
    primary_conv: Conv2dParams
    primary_bn: BatchNormParams
    primary_relu: bool
    branches: Tuple[Branch, ...]
    final_relu: bool

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if self.primary_conv.kernel_size != 1 or self.primary_conv.groups != 1:
            raise ConfigError("The primary convolution must be a dense 1x1 conv")
        if self.primary_bn.channels != self.primary_conv.c_out:
            raise ConfigError("Primary BatchNorm width does not match the primary conv")
        kinds = [b.kind for b in self.branches]
        if kinds.count(BranchKind.DCONV3x3_BN) != 1:
            raise ConfigError("A branch set needs exactly one dconv3x3_bn branch")
        if len(set(kinds)) != len(kinds):
            raise ConfigError(f"Duplicate branch kinds in {[k.value for k in kinds]}")
        for branch in self.branches:
            if branch.channels not in (None, self.out_channels):
                raise ConfigError(
                    f"Branch {branch.kind.value} has {branch.channels} channels, expected {self.out_channels}"
                )

    @property
    def in_channels(self) -> int:
        return self.primary_conv.c_in

    @property
    def out_channels(self) -> int:
        return self.primary_conv.c_out


@dataclass(frozen=True, eq=False)
class RepGhostModuleDeploy:
    primary: Conv2dParams
    primary_relu: bool
    fused_dconv: Conv2dParams
    final_relu: bool

    def __post_init__(self):
        if self.primary.bias is None or self.fused_dconv.bias is None:
            raise ConfigError("Deploy convolutions must carry a bias")
        if not self.fused_dconv.is_depthwise or self.fused_dconv.c_out != self.primary.c_out:
            raise ConfigError("The fused conv must be depthwise over the primary output")

    @property
    def in_channels(self) -> int:
        return self.primary.c_in

    @property
    def out_channels(self) -> int:
        return self.primary.c_out


# Table of re-parameterization structures; every set holds the 3x3 dconv branch.
REPARAM_VARIANTS = {
    "no-reparam": ((BranchKind.DCONV3x3_BN,), False),
    "id": ((BranchKind.DCONV3x3_BN, BranchKind.IDENTITY), False),
    "1x1dconv": ((BranchKind.DCONV3x3_BN, BranchKind.DCONV1x1_BN), False),
    "bn": ((BranchKind.DCONV3x3_BN, BranchKind.BN_ONLY), False),
    "1x1dconv+bn": ((BranchKind.DCONV3x3_BN, BranchKind.DCONV1x1_BN, BranchKind.BN_ONLY), False),
    "id+1x1dconv+bn": (
        (BranchKind.DCONV3x3_BN, BranchKind.IDENTITY, BranchKind.DCONV1x1_BN, BranchKind.BN_ONLY), False
    ),
    "bn+relu": ((BranchKind.DCONV3x3_BN, BranchKind.BN_ONLY), True),
}
DEFAULT_VARIANT = "bn"


def build_repghost_module(factory, c_in: int, c_out: int, relu: bool,
                          variant: str = DEFAULT_VARIANT) -> RepGhostModuleTrain:
    """Draw a training-form module from a `ParamFactory`."""
    if variant not in REPARAM_VARIANTS:
        raise ConfigError(f"Unknown re-parameterization variant '{variant}'. Choose from {sorted(REPARAM_VARIANTS)}")
    kinds, dconv_relu = REPARAM_VARIANTS[variant]
    primary_conv = factory.conv(c_in, c_out, 1)
    primary_bn = factory.bn(c_out)
    branches = []
    for kind in kinds:
        if kind is BranchKind.DCONV3x3_BN:
            branches.append(Branch(kind, factory.conv(c_out, c_out, 3, groups=c_out), factory.bn(c_out),
                                   relu=dconv_relu))
        elif kind is BranchKind.DCONV1x1_BN:
            branches.append(Branch(kind, factory.conv(c_out, c_out, 1, groups=c_out), factory.bn(c_out)))
        elif kind is BranchKind.BN_ONLY:
            branches.append(Branch(kind, bn=factory.bn(c_out)))
        else:
            branches.append(Branch(kind))
    return RepGhostModuleTrain(primary_conv, primary_bn, relu, tuple(branches), relu)


# ────────── weight-space fusion ──────────

def _folded(conv: Conv2dParams, bn: BatchNormParams):
    if bn.channels != conv.c_out:
        raise ConfigError(f"BatchNorm has {bn.channels} channels, convolution has {conv.c_out} outputs")
    scale, shift = bn.scale_shift()
    weight = conv.weight.astype(np.float64) * scale[:, None, None, None]
    bias = conv.bias.astype(np.float64) if conv.bias is not None else np.zeros(conv.c_out)
    return weight, shift + scale * bias


def fold_bn_into_conv(conv: Conv2dParams, bn: BatchNormParams) -> Conv2dParams:
    """Return a conv with bias whose output equals bn(conv(x))."""
    weight, bias = _folded(conv, bn)
    return Conv2dParams(weight, bias, conv.stride, conv.padding, conv.groups)


def _bn_kernel(bn: BatchNormParams, k: int):
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"Kernel size must be odd, got {k}")
    scale, shift = bn.scale_shift()
    weight = np.zeros((bn.channels, 1, k, k))
    weight[:, 0, k // 2, k // 2] = scale
    return weight, shift


def bn_to_depthwise_kernel(bn: BatchNormParams, k: int) -> Conv2dParams:
    """Depthwise k x k conv (center tap only) equivalent to bn(x)."""
    weight, bias = _bn_kernel(bn, k)
    return Conv2dParams(weight, bias, stride=1, padding=k // 2, groups=bn.channels)


def _padded_weight(weight: np.ndarray, k: int) -> np.ndarray:
    k0 = weight.shape[2]
    if k % 2 == 0 or k0 % 2 == 0 or weight.shape[2] != weight.shape[3]:
        raise ConfigError(f"Kernel sizes must be square and odd, got {weight.shape[2:]} -> {k}")
    if k0 > k:
        raise ConfigError(f"Cannot pad a {k0}x{k0} kernel down to {k}x{k}")
    pad = (k - k0) // 2
    return np.pad(weight.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def pad_kernel_to(conv: Conv2dParams, k: int) -> Conv2dParams:
    """Zero-pad kernels to k x k; padding grows so the function is unchanged."""
    weight = _padded_weight(conv.weight, k)
    return Conv2dParams(weight, conv.bias, conv.stride, conv.padding + (k - conv.kernel_size) // 2, conv.groups)


def branch_to_kernel(branch: Branch, channels: int, k: int = FUSED_KERNEL_SIZE):
    """(weight, bias) in float64 of a depthwise k x k conv equivalent to the branch."""
    if branch.relu:
        raise ConfigError(
            f"Branch {branch.kind.value} has a ReLU after its depthwise conv and cannot be re-parameterized"
        )
    if branch.kind in (BranchKind.DCONV3x3_BN, BranchKind.DCONV1x1_BN):
        weight, bias = _folded(branch.conv, branch.bn)
        return _padded_weight(weight, k), bias
    if branch.kind is BranchKind.BN_ONLY:
        return _bn_kernel(branch.bn, k)
    weight = np.zeros((channels, 1, k, k))
    weight[:, 0, k // 2, k // 2] = 1.0
    return weight, np.zeros(channels)


def fuse_module(m: RepGhostModuleTrain) -> RepGhostModuleDeploy:
    channels = m.out_channels
    weight = np.zeros((channels, 1, FUSED_KERNEL_SIZE, FUSED_KERNEL_SIZE))
    bias = np.zeros(channels)
    for branch in m.branches:
        w, b = branch_to_kernel(branch, channels)
        weight += w
        bias += b
    fused = Conv2dParams(weight, bias, stride=1, padding=FUSED_KERNEL_SIZE // 2, groups=channels)
    logger.debug("Fused %d branches over %d channels", len(m.branches), channels)
    return RepGhostModuleDeploy(fold_bn_into_conv(m.primary_conv, m.primary_bn), m.primary_relu, fused, m.final_relu)


def _identity_bn(channels: int) -> BatchNormParams:
    return BatchNormParams(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels), eps=0.0)


def as_train_form(d: RepGhostModuleDeploy) -> RepGhostModuleTrain:
    """Wrap a deploy module as a single-branch training module with identity BNs."""
    channels = d.out_channels
    branch = Branch(BranchKind.DCONV3x3_BN, d.fused_dconv, _identity_bn(channels))
    return RepGhostModuleTrain(d.primary, _identity_bn(channels), d.primary_relu, (branch,), d.final_relu)


# ────────── forwards ──────────

def _branch_forward(branch: Branch, x: Tensor) -> Tensor:
    if branch.kind is BranchKind.IDENTITY:
        return x
    if branch.kind is BranchKind.BN_ONLY:
        return batch_norm_infer(x, branch.bn)
    out = batch_norm_infer(conv2d(x, branch.conv), branch.bn)
    return relu(out) if branch.relu else out


def forward_train(m: RepGhostModuleTrain, x: Tensor) -> Tensor:
    if x.shape[1] != m.in_channels:
        raise ShapeError(f"Module expects {m.in_channels} input channels, got {x.shape[1]}")
    y = batch_norm_infer(conv2d(x, m.primary_conv), m.primary_bn)
    if m.primary_relu:
        y = relu(y)
    out = None
    for branch in m.branches:
        branch_out = _branch_forward(branch, y)
        out = branch_out if out is None else add_elementwise(out, branch_out)
    return relu(out) if m.final_relu else out


def forward_deploy(m: RepGhostModuleDeploy, x: Tensor) -> Tensor:
    if x.shape[1] != m.in_channels:
        raise ShapeError(f"Module expects {m.in_channels} input channels, got {x.shape[1]}")
    y = conv2d(x, m.primary)
    if m.primary_relu:
        y = relu(y)
    y = conv2d(y, m.fused_dconv)
    return relu(y) if m.final_relu else y


# ────────── equivalence checking ──────────

class EquivalenceReport(BaseModel):
    """Outcome of comparing a training form with its deploy form."""
    trials: int = Field(..., description="Number of random inputs evaluated")
    input_shape: Tuple[int, int, int, int] = Field(..., description="Logical NCHW shape of every input")
    max_abs_diff: float = Field(..., description="Largest absolute output difference over all trials")
    tol: float = Field(..., description="Pass threshold")
    passed: bool = Field(..., description="Whether max_abs_diff <= tol")


def _module_forward(form, x: Tensor) -> Tensor:
    if isinstance(form, RepGhostModuleTrain):
        return forward_train(form, x)
    if isinstance(form, RepGhostModuleDeploy):
        return forward_deploy(form, x)
    raise ConfigError(f"Unsupported form {type(form).__name__}")


def verify_equivalence(train_form, deploy_form, trials: int = 5, tol: float = 1e-4,
                       input_shape=None, seed: int = 0, forward=None) -> EquivalenceReport:
    """
    Run both forms on `trials` seeded inputs and report the largest difference.

    `forward(form, x)` defaults to the module forwards; net_builder passes its
    network forward so whole networks can be checked the same way.
    """
    forward = forward or _module_forward
    if (train_form.in_channels, train_form.out_channels) != (deploy_form.in_channels, deploy_form.out_channels):
        raise ConfigError(
            f"Forms disagree on channels: {train_form.in_channels}->{train_form.out_channels} vs "
            f"{deploy_form.in_channels}->{deploy_form.out_channels}"
        )
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    input_shape = tuple(input_shape or (1, train_form.in_channels, 14, 14))
    worst = 0.0
    for trial in range(trials):
        x = tensor_from_seed(input_shape, seed=seed + trial)
        worst = max(worst, max_abs_diff(forward(train_form, x), forward(deploy_form, x)))
    passed = worst <= tol
    logger.info("Equivalence over %d trials: max diff %.3e (tol %.1e) -> %s",
                trials, worst, tol, "pass" if passed else "FAIL")
    return EquivalenceReport(trials=trials, input_shape=input_shape, max_abs_diff=worst, tol=tol, passed=passed)
