"""Binary tensor file format and checkpoint directories.

Tensor file layout (all integers little-endian):
    magic   4 bytes  b"ESST"
    version u16      currently 1
    dtype   u8       0 = float64, 1 = float32, 2 = int64, 3 = uint8
    rank    u8
    dims    rank * u64
    payload raw little-endian array data, C order

A checkpoint is a directory holding ``manifest.json`` (model/layer specs,
optimizer scalars, rng state) plus one ``.esst`` file per named array.
"""
from __future__ import annotations

import json
import os
import struct
from typing import Dict, Tuple

import numpy as np

from ..errors import DataError

MAGIC = b"ESST"
VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f8"): 0,
    np.dtype("<f4"): 1,
    np.dtype("<i8"): 2,
    np.dtype("uint8"): 3,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def write_tensor(path: str, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array)
    dt = arr.dtype.newbyteorder("<")
    if np.dtype(dt) not in _DTYPE_CODES:
        raise DataError(f"unsupported dtype {arr.dtype} for tensor file")
    code = _DTYPE_CODES[np.dtype(dt)]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HBB", VERSION, code, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(arr.astype(dt, copy=False).tobytes(order="C"))


def read_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(8)
        if len(head) < 8 or head[:4] != MAGIC:
            raise DataError(f"{path}: not an ESST tensor file")
        version, code, rank = struct.unpack("<HBB", head[4:8])
        if version != VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        if code not in _CODE_DTYPES:
            raise DataError(f"{path}: unknown dtype code {code}")
        dims_raw = f.read(8 * rank)
        if len(dims_raw) != 8 * rank:
            raise DataError(f"{path}: truncated header")
        shape = struct.unpack(f"<{rank}Q", dims_raw)
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = f.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise DataError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def save_checkpoint(directory: str, manifest: Dict, arrays: Dict[str, np.ndarray]) -> None:
    """Write manifest + named tensors into ``directory`` (created if needed)."""
    os.makedirs(directory, exist_ok=True)
    manifest = dict(manifest)
    manifest["tensors"] = sorted(arrays.keys())
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    for name, arr in arrays.items():
        write_tensor(os.path.join(directory, name + ".esst"), arr)


def load_checkpoint(directory: str) -> Tuple[Dict, Dict[str, np.ndarray]]:
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise DataError(f"{directory}: no manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    arrays = {}
    for name in manifest.get("tensors", []):
        arrays[name] = read_tensor(os.path.join(directory, name + ".esst"))
    return manifest, arrays
