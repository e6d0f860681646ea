"""Numpy fallback for the isotropic spatial convolution kernels.

Mirrors the compiled module's contracts exactly; each offset contributes
one BLAS contraction over the fused-channel axis.
"""
from __future__ import annotations

import numpy as np


def _offset_slices(extent: int, delta: int):
    """(out_slice, src_slice) pairs so that out[p] pairs with src[p + delta]."""
    span = extent - abs(delta)
    out_lo = max(0, -delta)
    src_lo = max(0, delta)
    return slice(out_lo, out_lo + span), slice(src_lo, src_lo + span)


def conv_forward(feat, weights, binmap, out, num_threads=1):
    s = binmap.shape[0]
    h = s // 2
    _, X, Y, Z, _, _ = feat.shape
    acc = np.moveaxis(out, 4, 5)  # view (B, X, Y, Z, V, O)
    for i in range(s):
        ox, sx = _offset_slices(X, i - h)
        if ox.start >= ox.stop:
            continue
        for j in range(s):
            oy, sy = _offset_slices(Y, j - h)
            if oy.start >= oy.stop:
                continue
            for k in range(s):
                oz, sz = _offset_slices(Z, k - h)
                if oz.start >= oz.stop:
                    continue
                w = weights[:, :, binmap[i, j, k]]  # (O, M)
                block = np.tensordot(feat[:, sx, sy, sz], w, axes=([4], [1]))
                acc[:, ox, oy, oz] += block


def conv_backward_input(gout, weights, binmap, gfeat, num_threads=1):
    s = binmap.shape[0]
    h = s // 2
    _, X, Y, Z, _, _ = gout.shape
    acc = np.moveaxis(gfeat, 4, 5)  # view (B, X, Y, Z, V, M)
    for i in range(s):
        ox, sx = _offset_slices(X, i - h)
        if ox.start >= ox.stop:
            continue
        for j in range(s):
            oy, sy = _offset_slices(Y, j - h)
            if oy.start >= oy.stop:
                continue
            for k in range(s):
                oz, sz = _offset_slices(Z, k - h)
                if oz.start >= oz.stop:
                    continue
                w = weights[:, :, binmap[i, j, k]]  # (O, M)
                block = np.tensordot(gout[:, ox, oy, oz], w, axes=([4], [0]))
                acc[:, sx, sy, sz] += block


def conv_backward_weights(gout, feat, binmap, gweights, num_threads=1):
    s = binmap.shape[0]
    h = s // 2
    _, X, Y, Z, _, _ = gout.shape
    for i in range(s):
        ox, sx = _offset_slices(X, i - h)
        if ox.start >= ox.stop:
            continue
        for j in range(s):
            oy, sy = _offset_slices(Y, j - h)
            if oy.start >= oy.stop:
                continue
            for k in range(s):
                oz, sz = _offset_slices(Z, k - h)
                if oz.start >= oz.stop:
                    continue
                block = np.tensordot(
                    gout[:, ox, oy, oz],
                    feat[:, sx, sy, sz],
                    axes=([0, 1, 2, 3, 5], [0, 1, 2, 3, 5]),
                )  # (O, M)
                gweights[:, :, binmap[i, j, k]] += block
