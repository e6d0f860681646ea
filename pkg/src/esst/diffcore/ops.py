"""Differentiable operations on :class:`~esst.diffcore.tensor.Tensor`.

Each op computes its forward value eagerly with numpy and registers a
closure that pushes adjoints to its inputs. Ops accept plain scalars or
arrays wherever a Tensor is expected; those are treated as constants.

Adjoint conventions: broadcasting in elementwise ops is undone by
summation (``_unbroadcast``); nondifferentiable points use standard
subgradients (0 at the kink for ``relu``/``abs``).
"""
from __future__ import annotations

import builtins
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeError
from .tensor import Tensor, as_tensor

ArrayLike = Union[Tensor, np.ndarray, float, int]


def _coerce(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else as_tensor(x)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum-reduce ``grad`` over axes broadcast relative to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, parents, backward_fn, axes=None) -> Tensor:
    needs = builtins.any(p.requires_grad or p._backward_fn is not None for p in parents)
    if not needs:
        return Tensor(data, axes=axes)
    return Tensor(data, parents=tuple(parents), backward_fn=backward_fn, axes=axes)


# -- arithmetic ---------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data - b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data / b.data

    def backward(g):
        a._accumulate(_unbroadcast(g / b.data, a.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), backward)


def neg(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    return _make(-a.data, (a,), lambda g: a._accumulate(-g))


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = _coerce(a)
    exponent = float(exponent)
    out_data = a.data**exponent

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return _make(out_data, (a,), backward)


def square(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    return _make(a.data * a.data, (a,), lambda g: a._accumulate(2.0 * g * a.data))


def sqrt(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * (0.5 / out_data))

    return _make(out_data, (a,), backward)


def exp(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    out_data = np.exp(a.data)
    return _make(out_data, (a,), lambda g: a._accumulate(g * out_data))


def log(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    return _make(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))


def absolute(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    return _make(np.abs(a.data), (a,), lambda g: a._accumulate(g * np.sign(a.data)))


def relu(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), backward)


def softplus(a: ArrayLike) -> Tensor:
    """log(1 + exp(x)), computed stably for large |x|."""
    a = _coerce(a)
    out_data = np.logaddexp(0.0, a.data)

    def backward(g):
        a._accumulate(g / (1.0 + np.exp(-a.data)))

    return _make(out_data, (a,), backward)


def clamp_min(a: ArrayLike, floor: float) -> Tensor:
    """max(x, floor); gradient passes only where x > floor."""
    a = _coerce(a)
    mask = a.data > floor

    def backward(g):
        a._accumulate(g * mask)

    return _make(np.where(mask, a.data, floor), (a,), backward)


# -- reductions ---------------------------------------------------------------


def _norm_axes(axis, ndim) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    axes = _norm_axes(axis, a.ndim)
    out_data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axes)
        a._accumulate(np.broadcast_to(gg, a.shape).copy())

    return _make(out_data, (a,), backward)


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    axes = _norm_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    out_data = a.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axes)
        a._accumulate(np.broadcast_to(gg, a.shape) / count)

    return _make(out_data, (a,), backward)


# -- shape manipulation ---------------------------------------------------------


def reshape(a: ArrayLike, shape) -> Tensor:
    a = _coerce(a)
    shape = tuple(shape)
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(out_data, (a,), backward)


def moveaxis(a: ArrayLike, source, destination) -> Tensor:
    a = _coerce(a)
    out_data = np.moveaxis(a.data, source, destination)

    def backward(g):
        a._accumulate(np.moveaxis(g, destination, source))

    return _make(np.ascontiguousarray(out_data), (a,), backward)


def concat(tensors: Sequence[ArrayLike], axis: int) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    axis = axis % ts[0].ndim
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            t._accumulate(g[tuple(index)])

    return _make(out_data, ts, backward)


def getitem(a: ArrayLike, key) -> Tensor:
    """Basic (slice/int/ellipsis) indexing with scatter-add backward."""
    a = _coerce(a)
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        a._accumulate(full)

    return _make(np.ascontiguousarray(out_data), (a,), backward)


def pad(a: ArrayLike, pad_width, mode: str = "zero") -> Tensor:
    """Pad with zeros or edge replication; backward folds pad regions back."""
    a = _coerce(a)
    pad_width = tuple((int(lo), int(hi)) for lo, hi in pad_width)
    if mode == "zero":
        out_data = np.pad(a.data, pad_width, mode="constant")
    elif mode == "edge":
        out_data = np.pad(a.data, pad_width, mode="edge")
    else:
        raise ShapeError(f"unknown pad mode {mode!r}")

    inner = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.shape))

    def backward(g):
        if mode == "zero":
            a._accumulate(g[inner])
            return
        # edge mode: fold each replicated border back onto its source slab
        gg = g.copy()
        for ax, (lo, hi) in enumerate(pad_width):
            if lo:
                index_src = [slice(None)] * gg.ndim
                index_dst = [slice(None)] * gg.ndim
                index_src[ax] = slice(0, lo)
                index_dst[ax] = slice(lo, lo + 1)
                gg[tuple(index_dst)] += gg[tuple(index_src)].sum(axis=ax, keepdims=True)
            if hi:
                index_src = [slice(None)] * gg.ndim
                index_dst = [slice(None)] * gg.ndim
                index_src[ax] = slice(gg.shape[ax] - hi, gg.shape[ax])
                index_dst[ax] = slice(gg.shape[ax] - hi - 1, gg.shape[ax] - hi)
                gg[tuple(index_dst)] += gg[tuple(index_src)].sum(axis=ax, keepdims=True)
            trim = [slice(None)] * gg.ndim
            trim[ax] = slice(lo, gg.shape[ax] - hi)
            gg = gg[tuple(trim)]
        a._accumulate(gg)

    return _make(out_data, (a,), backward)


def repeat(a: ArrayLike, repeats: int, axis: int) -> Tensor:
    """np.repeat along one axis; backward sums each repeated block."""
    a = _coerce(a)
    axis = axis % a.ndim
    out_data = np.repeat(a.data, repeats, axis=axis)

    def backward(g):
        new_shape = g.shape[:axis] + (a.shape[axis], repeats) + g.shape[axis + 1 :]
        a._accumulate(g.reshape(new_shape).sum(axis=axis + 1))

    return _make(out_data, (a,), backward)


def broadcast_to(a: ArrayLike, shape) -> Tensor:
    a = _coerce(a)
    shape = tuple(shape)
    out_data = np.broadcast_to(a.data, shape).copy()

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))

    return _make(out_data, (a,), backward)


def stop_gradient(a: ArrayLike) -> Tensor:
    a = _coerce(a)
    return Tensor(a.data, axes=a.axes)


# -- linear maps ----------------------------------------------------------------


def apply_matrix(a: ArrayLike, matrix: np.ndarray, axis: int = -1) -> Tensor:
    """Contract a constant matrix against one axis.

    ``out[..., i, ...] = sum_j matrix[i, j] * a[..., j, ...]`` along ``axis``.
    The matrix is a constant of the graph (no gradient is produced for it).
    """
    a = _coerce(a)
    axis = axis % a.ndim
    matrix = np.asarray(matrix, dtype=a.dtype)
    if matrix.ndim != 2 or matrix.shape[1] != a.shape[axis]:
        raise ShapeError(f"matrix {matrix.shape} incompatible with axis length {a.shape[axis]}")
    moved = np.moveaxis(a.data, axis, -1)
    out = moved @ matrix.T
    out_data = np.ascontiguousarray(np.moveaxis(out, -1, axis))

    def backward(g):
        gm = np.moveaxis(g, axis, -1)
        ga = gm @ matrix
        a._accumulate(np.ascontiguousarray(np.moveaxis(ga, -1, axis)))

    return _make(out_data, (a,), backward)


def apply_sparse(a: ArrayLike, matrix: sp.spmatrix, axis: int = -1) -> Tensor:
    """Like :func:`apply_matrix` with a constant scipy sparse matrix."""
    a = _coerce(a)
    axis = axis % a.ndim
    csr = matrix.tocsr()
    csr_t = csr.T.tocsr()
    if csr.shape[1] != a.shape[axis]:
        raise ShapeError(f"sparse {csr.shape} incompatible with axis length {a.shape[axis]}")

    def apply(arr, m):
        moved = np.moveaxis(arr, axis, -1)
        flat = moved.reshape(-1, moved.shape[-1])
        res = (m @ flat.T).T.astype(arr.dtype, copy=False)
        res = res.reshape(moved.shape[:-1] + (m.shape[0],))
        return np.ascontiguousarray(np.moveaxis(res, -1, axis))

    out_data = apply(a.data, csr)

    def backward(g):
        a._accumulate(apply(g, csr_t))

    return _make(out_data, (a,), backward)


def channel_mix(x: ArrayLike, weight: ArrayLike, axis: int) -> Tensor:
    """Mix one axis with a trainable matrix: out = weight[o, m] . x[..m..].

    Unlike :func:`apply_matrix` the matrix is part of the graph and
    receives a gradient.
    """
    x, weight = _coerce(x), _coerce(weight)
    axis = axis % x.ndim
    if weight.ndim != 2 or weight.shape[1] != x.shape[axis]:
        raise ShapeError(f"weight {weight.shape} incompatible with axis length {x.shape[axis]}")
    moved = np.moveaxis(x.data, axis, -1)
    out = moved @ weight.data.T
    out_data = np.ascontiguousarray(np.moveaxis(out, -1, axis))

    def backward(g):
        gm = np.moveaxis(g, axis, -1)
        if x.requires_grad or x._backward_fn is not None:
            gx = gm @ weight.data
            x._accumulate(np.ascontiguousarray(np.moveaxis(gx, -1, axis)))
        if weight.requires_grad or weight._backward_fn is not None:
            flat_g = gm.reshape(-1, gm.shape[-1])
            flat_x = moved.reshape(-1, moved.shape[-1])
            weight._accumulate((flat_g.T @ flat_x).astype(weight.dtype, copy=False))

    return _make(out_data, (x, weight), backward)


# -- composites -----------------------------------------------------------------


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (shift is detached)."""
    a = _coerce(a)
    shift = np.max(a.data, axis=axis, keepdims=True)
    e = exp(sub(a, shift))
    return div(e, sum(e, axis=axis, keepdims=True))


def sum_squares(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    return sum(square(a), axis=axis, keepdims=keepdims)
