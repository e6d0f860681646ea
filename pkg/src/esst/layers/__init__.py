from .conv import (
    ChebConv,
    E3SO3Conv,
    SpatialIsoConv,
    cheb_features,
    dense_kernel,
    glorot_uniform,
    radius_bins,
    spatial_iso_conv,
)
from .norm import BatchNorm
from .pool import crop_spatial, pool, unpool

__all__ = [
    "BatchNorm",
    "ChebConv",
    "E3SO3Conv",
    "SpatialIsoConv",
    "cheb_features",
    "crop_spatial",
    "dense_kernel",
    "glorot_uniform",
    "pool",
    "radius_bins",
    "spatial_iso_conv",
    "unpool",
]
