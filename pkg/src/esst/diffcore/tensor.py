"""Dense tensors with reverse-mode differentiation.

A ``Tensor`` wraps a numpy array and, when it participates in a
differentiable computation, remembers its parents and a closure that
propagates adjoints to them. Calling :meth:`Tensor.backward` on a result
walks the implicit tape (a DAG) in reverse topological order and
accumulates ``.grad`` on every reachable tensor with ``requires_grad``.

Everything is eager and single threaded; given fixed inputs the forward
and backward passes are bitwise deterministic.
"""
from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np

from ..errors import NumericalError, ShapeError

# Axis roles a tensor may annotate its axes with. Roles of kind
# "spatial-*"/"channel"/"sphere-vertex"/"batch" must appear at most once.
AXIS_ROLES = ("batch", "spatial-x", "spatial-y", "spatial-z", "channel", "sphere-vertex")

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Set the dtype new tensors are created with (float64 or float32)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ShapeError(f"unsupported default dtype {dt}")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """Node in the differentiation tape.

    Args:
        data: array-like forward value; copied only if conversion is needed.
        requires_grad: mark as a differentiable leaf (parameter/input).
        parents: tensors this value was computed from.
        backward_fn: closure ``(grad_out) -> None`` that accumulates
            adjoints into the parents. Only set by ops.
        axes: optional per-axis role annotation (see ``AXIS_ROLES``).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "axes")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward_fn: Optional[Callable[[np.ndarray], None]] = None,
        axes: Optional[Sequence[str]] = None,
    ):
        if isinstance(data, Tensor):
            raise ShapeError("Tensor(data) got a Tensor; use it directly")
        arr = np.asarray(data)
        if arr.dtype not in (np.float64, np.float32):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward_fn = backward_fn
        if axes is not None:
            axes = tuple(axes)
            if len(axes) != arr.ndim:
                raise ShapeError(f"{len(axes)} axis roles for rank-{arr.ndim} tensor")
            seen = [a for a in axes if a != "other"]
            if len(set(seen)) != len(seen):
                raise ShapeError(f"duplicate axis roles in {axes}")
        self.axes = axes

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, axes=self.axes)

    # -- gradient machinery --------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"adjoint shape {grad.shape} does not match value shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """Reverse accumulation from this tensor.

        ``seed`` defaults to ones (i.e. 1.0 for a scalar loss). Tensors not
        reachable from any ``requires_grad`` leaf are skipped; unused
        parameters keep ``grad is None`` which readers treat as zero.
        """
        if self._backward_fn is None and not self.requires_grad:
            raise NumericalError("backward called on a tensor with no recorded forward tape")
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ShapeError(f"seed shape {seed.shape} != value shape {self.data.shape}")

        order = _toposort(self)
        self._accumulate(seed)
        for node in order:
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def grad_or_zero(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    # -- operator sugar (thin wrappers over esst.diffcore.ops) ----------------

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(other, self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __pow__(self, exponent):
        from . import ops

        return ops.power(self, exponent)

    def __getitem__(self, key):
        from . import ops

        return ops.getitem(self, key)

    def reshape(self, *shape):
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)


def _toposort(root: Tensor) -> list:
    """Reverse topological order of the DAG ending at ``root``."""
    order: list = []
    visited: set = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order[::-1]


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype if dtype is not None else _DEFAULT_DTYPE)
    return Tensor(arr)


def parameter(data, axes=None) -> Tensor:
    """A differentiable leaf holding a copy of ``data``."""
    arr = np.array(data, dtype=_DEFAULT_DTYPE, copy=True)
    return Tensor(arr, requires_grad=True, axes=axes)


def collect_parameters(objs: Iterable) -> list:
    """Flatten ``.parameters()``-style nested iterables of Tensors."""
    out = []
    for obj in objs:
        if isinstance(obj, Tensor):
            out.append(obj)
        else:
            out.extend(collect_parameters(obj))
    return out
