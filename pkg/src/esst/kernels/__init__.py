"""Backend dispatch for the hot spatial-convolution kernels.

At import the compiled Cython extension is preferred; the numpy reference
implementation is the fallback. ``ESST_BACKEND=numpy|cython`` forces a
choice (forcing an unavailable backend raises).
"""
from __future__ import annotations

import os

import numpy as np

from ..errors import ConfigError
from . import reference

try:
    from . import _spatial as _compiled
except ImportError:  # extension not built
    _compiled = None

_forced = os.environ.get("ESST_BACKEND", "").strip().lower()
if _forced == "cython":
    if _compiled is None:
        raise ConfigError("ESST_BACKEND=cython but the compiled extension is unavailable")
    _impl = _compiled
elif _forced == "numpy":
    _impl = reference
elif _forced == "":
    _impl = _compiled if _compiled is not None else reference
else:
    raise ConfigError(f"unknown ESST_BACKEND {_forced!r}")

_num_threads = min(4, os.cpu_count() or 1)


def backend_name() -> str:
    return "cython" if _impl is _compiled else "numpy"


def compiled_available() -> bool:
    return _compiled is not None


def get_backend(name: str | None = None):
    """Return a kernel module by name (None = active backend)."""
    if name is None:
        return _impl
    if name == "numpy":
        return reference
    if name == "cython":
        if _compiled is None:
            raise ConfigError("compiled backend unavailable")
        return _compiled
    raise ConfigError(f"unknown backend {name!r}")


def set_num_threads(n: int) -> None:
    global _num_threads
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    _num_threads = int(n)


def num_threads() -> int:
    return _num_threads


def _check(feat, weights, binmap):
    if feat.ndim != 6:
        raise ConfigError(f"feat must be 6-axis (B,X,Y,Z,M,V), got {feat.shape}")
    s = binmap.shape[0]
    if binmap.shape != (s, s, s) or s % 2 == 0:
        raise ConfigError(f"binmap must be cubic with odd size, got {binmap.shape}")
    if weights.ndim != 3 or weights.shape[1] != feat.shape[4]:
        raise ConfigError(f"weights {weights.shape} do not match feat {feat.shape}")
    if int(binmap.max()) >= weights.shape[2]:
        raise ConfigError("binmap refers to more bins than weights provide")


def conv3d_iso_forward(feat: np.ndarray, weights: np.ndarray, binmap: np.ndarray,
                       impl=None) -> np.ndarray:
    _check(feat, weights, binmap)
    impl = impl or _impl
    feat = np.ascontiguousarray(feat)
    weights = np.ascontiguousarray(weights, dtype=feat.dtype)
    binmap = np.ascontiguousarray(binmap, dtype=np.int32)
    out_shape = feat.shape[:4] + (weights.shape[0], feat.shape[5])
    out = np.zeros(out_shape, dtype=feat.dtype)
    impl.conv_forward(feat, weights, binmap, out, _num_threads)
    return out


def conv3d_iso_backward_input(gout: np.ndarray, weights: np.ndarray, binmap: np.ndarray,
                              in_channels: int, impl=None) -> np.ndarray:
    impl = impl or _impl
    gout = np.ascontiguousarray(gout)
    weights = np.ascontiguousarray(weights, dtype=gout.dtype)
    binmap = np.ascontiguousarray(binmap, dtype=np.int32)
    gfeat = np.zeros(gout.shape[:4] + (in_channels, gout.shape[5]), dtype=gout.dtype)
    impl.conv_backward_input(gout, weights, binmap, gfeat, _num_threads)
    return gfeat


def conv3d_iso_backward_weights(gout: np.ndarray, feat: np.ndarray, binmap: np.ndarray,
                                nbins: int, impl=None) -> np.ndarray:
    impl = impl or _impl
    gout = np.ascontiguousarray(gout)
    feat = np.ascontiguousarray(feat, dtype=gout.dtype)
    binmap = np.ascontiguousarray(binmap, dtype=np.int32)
    gweights = np.zeros((gout.shape[4], feat.shape[4], nbins), dtype=gout.dtype)
    impl.conv_backward_weights(gout, feat, binmap, gweights, _num_threads)
    return gweights
