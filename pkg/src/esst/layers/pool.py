"""Mean pooling and unpooling on fields: spatial 2^3 then sphere arity-4.

Sphere vertices are in NESTED order, so the four children of coarse
vertex p occupy fine slots 4p..4p+3; pooling is a reshape-mean and
unpooling a fourfold repeat. Odd spatial dims are edge-padded up before
halving; the matching unpool output is cropped back by the caller (the
UNet keeps the pre-pool shapes).
"""
from __future__ import annotations

from typing import Tuple

from ..diffcore import Tensor, ops
from ..errors import ConfigError
from ..fields import check_field


def pool(x: Tensor, spatial: bool = True, sphere: bool = True) -> Tensor:
    check_field(x)
    b, sx, sy, sz, c, v = x.shape
    if sphere:
        if v % 4 != 0 or v < 48:
            raise ConfigError(f"sphere axis of {v} vertices has no coarser level (nside=1 cannot pool)")
    if spatial:
        pads = [(0, sx % 2), (0, sy % 2), (0, sz % 2)]
        if any(p[1] for p in pads):
            x = ops.pad(x, ((0, 0), *pads, (0, 0), (0, 0)), mode="edge")
        b, sx, sy, sz, c, v = x.shape
        x = ops.reshape(x, (b, sx // 2, 2, sy // 2, 2, sz // 2, 2, c, v))
        x = ops.mean(x, axis=(2, 4, 6))
    if sphere:
        b2 = x.shape[0]
        shp = x.shape
        x = ops.reshape(x, shp[:-1] + (v // 4, 4))
        x = ops.mean(x, axis=-1)
    return x


def unpool(x: Tensor, spatial: bool = True, sphere: bool = True) -> Tensor:
    check_field(x)
    if sphere:
        x = ops.repeat(x, 4, axis=-1)
    if spatial:
        x = ops.repeat(x, 2, axis=1)
        x = ops.repeat(x, 2, axis=2)
        x = ops.repeat(x, 2, axis=3)
    return x


def crop_spatial(x: Tensor, shape: Tuple[int, int, int]) -> Tensor:
    """Crop the spatial axes down to ``shape`` (undo pool's odd-dim padding)."""
    return x[:, : shape[0], : shape[1], : shape[2], :, :]
