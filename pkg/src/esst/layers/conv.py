"""Convolutional layers on spatio-spherical fields.

All layers consume and produce 6-axis field tensors [B, X, Y, Z, C, V].
The spherical part is a Chebyshev polynomial of the rescaled graph
Laplacian; the spatial part is a 3D convolution whose kernel weights are
shared across all offsets with the same Euclidean norm (one weight per
radius bin), which is what makes it commute with the 48 cube symmetries
exactly and with continuous rotations up to resampling.

Fused-channel ordering: the Chebyshev feature stack enumerates the fused
index m = (k, c) k-major, i.e. column m = k * C_in + c.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Optional

import numpy as np

from .. import kernels
from ..diffcore import Tensor, ops, parameter
from ..diffcore.tensor import default_dtype
from ..errors import ConfigError, ShapeError
from ..fields import check_field
from ..sphere import SphereGraph

MAX_CHEB_DEGREE = 32


@lru_cache(maxsize=8)
def radius_bins(size: int):
    """(binmap, radii) for a cubic kernel: offsets sharing |offset| share a bin.

    For size 3 the radii are {0, 1, sqrt(2), sqrt(3)} -> 4 bins.
    """
    if size % 2 == 0 or size < 1:
        raise ConfigError(f"kernel size must be odd and positive, got {size}")
    ax = np.arange(size) - (size - 1) / 2
    dist = np.sqrt(ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2)
    radii, inverse = np.unique(np.round(dist, 9), return_inverse=True)
    binmap = inverse.reshape(size, size, size).astype(np.int32)
    binmap.setflags(write=False)
    radii.setflags(write=False)
    return binmap, radii


def dense_kernel(weights: np.ndarray, size: int) -> np.ndarray:
    """Expand radius-bin weights (O, M, nbins) to a dense (O, M, s, s, s) kernel."""
    binmap, _ = radius_bins(size)
    return weights[:, :, binmap]


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def spatial_iso_conv(x: Tensor, weights: Tensor, size: int) -> Tensor:
    """Differentiable radius-binned 3D convolution over a field tensor.

    x: [B, X, Y, Z, M, V]; weights: [O, M, nbins]; zero padding, output
    [B, X, Y, Z, O, V]. Dispatches to the compiled kernel when available.
    """
    check_field(x)
    binmap, radii = radius_bins(size)
    if weights.shape[2] != len(radii):
        raise ShapeError(f"weights have {weights.shape[2]} bins, kernel size {size} needs {len(radii)}")
    out_data = kernels.conv3d_iso_forward(x.data, weights.data, binmap)
    in_channels = x.shape[4]
    nbins = weights.shape[2]

    def backward(g):
        if x.requires_grad or x._backward_fn is not None:
            x._accumulate(kernels.conv3d_iso_backward_input(g, weights.data, binmap, in_channels))
        if weights.requires_grad:
            weights._accumulate(
                kernels.conv3d_iso_backward_weights(g, x.data, binmap, nbins)
            )

    needs = x.requires_grad or x._backward_fn is not None or weights.requires_grad
    if not needs:
        return Tensor(out_data)
    return Tensor(out_data, parents=(x, weights), backward_fn=backward)


def cheb_features(x: Tensor, graph: SphereGraph, degree: int) -> Tensor:
    """Chebyshev feature stack T_k(L) f, fused along the channel axis.

    Output channel m = k * C_in + c holds T_k applied to input channel c.
    T_0 = I, T_1 = L, T_k = 2 L T_{k-1} - T_{k-2} on the rescaled Laplacian.
    """
    check_field(x)
    if not 1 <= degree <= MAX_CHEB_DEGREE:
        raise ConfigError(f"Chebyshev degree count {degree} outside [1, {MAX_CHEB_DEGREE}]")
    if x.shape[-1] != graph.n_vertices:
        raise ShapeError(
            f"field has {x.shape[-1]} vertices but graph level has {graph.n_vertices}"
        )
    lap = graph.laplacian
    stack = [x]
    if degree > 1:
        stack.append(ops.apply_sparse(x, lap, axis=-1))
    for _ in range(2, degree):
        nxt = ops.sub(ops.mul(ops.apply_sparse(stack[-1], lap, axis=-1), 2.0), stack[-2])
        stack.append(nxt)
    if degree == 1:
        return x
    return ops.concat(stack, axis=4)


class ChebConv:
    """Per-voxel spherical graph convolution (no spatial mixing).

    weight[o, m] mixes the Chebyshev feature stack into output channels;
    this is the `Spherical` convolution family on its own.
    """

    def __init__(self, in_channels: int, out_channels: int, degree: int,
                 rng: np.random.Generator, bias: bool = True):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.degree = degree
        fan_in = in_channels * degree
        self.weight = parameter(
            glorot_uniform(rng, (out_channels, in_channels * degree), fan_in, out_channels)
        )
        self.bias = parameter(np.zeros(out_channels)) if bias else None

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, x: Tensor, graph: SphereGraph) -> Tensor:
        feats = cheb_features(x, graph, self.degree)
        out = ops.channel_mix(feats, self.weight, axis=4)
        if self.bias is not None:
            out = ops.add(out, ops.reshape(self.bias, (1, 1, 1, 1, -1, 1)))
        return out


class E3SO3Conv:
    """Fused convolution: Chebyshev stack followed by radius-binned spatial mixing.

    weight[o, m, q] with m = (k, c) fused and q a radius bin; parameter
    count is C_out * C_in * K * nbins + C_out.
    """

    def __init__(self, in_channels: int, out_channels: int, degree: int,
                 kernel_size: int, rng: np.random.Generator, bias: bool = True):
        if kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {kernel_size}")
        _, radii = radius_bins(kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.degree = degree
        self.kernel_size = kernel_size
        self.n_bins = len(radii)
        vol = kernel_size**3
        fan_in = in_channels * degree * vol
        fan_out = out_channels * vol
        self.weight = parameter(
            glorot_uniform(rng, (out_channels, in_channels * degree, self.n_bins), fan_in, fan_out)
        )
        self.bias = parameter(np.zeros(out_channels)) if bias else None

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, x: Tensor, graph: SphereGraph) -> Tensor:
        feats = cheb_features(x, graph, self.degree)
        out = spatial_iso_conv(feats, self.weight, self.kernel_size)
        if self.bias is not None:
            out = ops.add(out, ops.reshape(self.bias, (1, 1, 1, 1, -1, 1)))
        return out


class SpatialIsoConv:
    """Radius-binned isotropic 3D convolution over plain channels.

    The `Gradient` and `SH` baseline families use this with the sphere
    axis folded into channels (V = 1 internally).
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, bias: bool = True):
        if kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {kernel_size}")
        _, radii = radius_bins(kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.n_bins = len(radii)
        vol = kernel_size**3
        self.weight = parameter(
            glorot_uniform(rng, (out_channels, in_channels, self.n_bins),
                           in_channels * vol, out_channels * vol)
        )
        self.bias = parameter(np.zeros(out_channels)) if bias else None

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, x: Tensor, graph: Optional[SphereGraph] = None) -> Tensor:
        out = spatial_iso_conv(x, self.weight, self.kernel_size)
        if self.bias is not None:
            out = ops.add(out, ops.reshape(self.bias, (1, 1, 1, 1, -1, 1)))
        return out
