"""Conventions for spatio-spherical fields.

A field is a 6-axis tensor [batch, x, y, z, channel, vertex] of real
samples: a spatial grid of multichannel spherical signals. Unbatched
5-axis arrays [X, Y, Z, C, V] are the on-disk / user-facing form; the
batch axis is added internally.
"""
from __future__ import annotations

import numpy as np

from .diffcore import Tensor
from .errors import ShapeError

FIELD_AXES = ("batch", "spatial-x", "spatial-y", "spatial-z", "channel", "sphere-vertex")


def as_field_tensor(array, n_vertices: int | None = None) -> Tensor:
    """Wrap a 5- or 6-axis array as a batched field tensor."""
    if isinstance(array, Tensor):
        data = array.data
    else:
        data = np.asarray(array)
    if data.ndim == 5:
        data = data[None]
    if data.ndim != 6:
        raise ShapeError(f"field must have 5 or 6 axes, got shape {data.shape}")
    if n_vertices is not None and data.shape[-1] != n_vertices:
        raise ShapeError(f"field has {data.shape[-1]} vertices, expected {n_vertices}")
    return Tensor(data, axes=FIELD_AXES)


def check_field(t: Tensor) -> Tensor:
    if t.ndim != 6:
        raise ShapeError(f"expected 6-axis field [B,X,Y,Z,C,V], got shape {t.shape}")
    return t
