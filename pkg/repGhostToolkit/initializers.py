"""Seeded parameter initialization shared by every network builder."""
import math
import logging

import numpy as np

from .nn_ops import DEFAULT_EPS, BatchNormParams, Conv2dParams, SEParams
from .tensor_core import Rng

logger = logging.getLogger(__name__)


class ParamFactory:
    """
    Draws parameters in call order from one splitmix64 stream.

    Conv weights are scaled to variance 1/fan_in and BN statistics stay close
    to identity, so activations remain O(1) through the whole network.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.rng = Rng(seed)

    def conv(self, c_in: int, c_out: int, k: int, stride: int = 1, groups: int = 1,
             bias: bool = False) -> Conv2dParams:
        fan_in = (c_in // groups) * k * k
        weight = self.rng.uniform((c_out, c_in // groups, k, k)) * np.float32(math.sqrt(12.0 / fan_in))
        b = self.rng.uniform((c_out,)) * np.float32(0.2) if bias else None
        return Conv2dParams(weight, b, stride=stride, padding=k // 2, groups=groups)

    def bn(self, channels: int) -> BatchNormParams:
        u = self.rng.uniform((4, channels))
        return BatchNormParams(
            gamma=0.75 + 0.5 * u[0],
            beta=0.1 * u[1],
            running_mean=0.1 * u[2],
            running_var=1.0 + u[3],
            eps=DEFAULT_EPS,
        )

    def se(self, channels: int, reduced: int) -> SEParams:
        return SEParams(self.conv(channels, reduced, 1, bias=True), self.conv(reduced, channels, 1, bias=True))
