"""Batch normalization over the channel axis of field tensors."""
from __future__ import annotations

import numpy as np

from ..diffcore import Tensor, ops, parameter
from ..errors import NumericalError
from ..fields import check_field

# statistics pool over batch, spatial and vertex axes; channels stay
_STAT_AXES = (0, 1, 2, 3, 5)


class BatchNorm:
    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.channels = channels
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.initialized = False

    def parameters(self):
        return [self.gamma, self.beta]

    def param_count(self) -> int:
        return 2 * self.channels

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var,
                "initialized": np.array([float(self.initialized)])}

    def load_buffers(self, buffers) -> None:
        self.running_mean = buffers["running_mean"].copy()
        self.running_var = buffers["running_var"].copy()
        self.initialized = bool(buffers["initialized"][0])

    def forward(self, x: Tensor, training: bool) -> Tensor:
        check_field(x)
        shape = (1, 1, 1, 1, self.channels, 1)
        if training:
            mean = ops.mean(x, axis=_STAT_AXES, keepdims=True)
            centered = ops.sub(x, mean)
            var = ops.mean(ops.square(centered), axis=_STAT_AXES, keepdims=True)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mean.data.reshape(-1)
            self.running_var = m * self.running_var + (1 - m) * var.data.reshape(-1)
            self.initialized = True
            inv = ops.power(ops.add(var, self.eps), -0.5)
            norm = ops.mul(centered, inv)
        else:
            if not self.initialized:
                raise NumericalError("batchnorm eval mode before any training step")
            norm = ops.mul(
                ops.sub(x, self.running_mean.reshape(shape)),
                1.0 / np.sqrt(self.running_var.reshape(shape) + self.eps),
            )
        return ops.add(
            ops.mul(norm, ops.reshape(self.gamma, shape)), ops.reshape(self.beta, shape)
        )
