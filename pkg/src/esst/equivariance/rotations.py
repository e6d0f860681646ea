"""Rotation operators on spatial grids and voxelwise spherical signals.

Grid rotations move the spatial lattice about the volume center
(f(x) -> f(R^-1 x)); voxel rotations rotate every voxel's spherical
function (f(q) -> f(R^-1 q)). Grid rotations support an exact mode for
the 48 signed-permutation cube symmetries and trilinear resampling with
zero fill for arbitrary matrices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..sphere import SHBasis
from ..sphere.rotate import rotation_operator


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform SO(3) sample via a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def cube_symmetries():
    """The 48 signed permutation matrices (24 rotations + 24 reflections)."""
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            out.append(m)
    return out


def signed_permutation_parts(matrix: np.ndarray) -> Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """Decompose a signed permutation matrix into (perm, signs); None if not one."""
    matrix = np.asarray(matrix)
    if matrix.shape != (3, 3):
        return None
    perm = []
    signs = []
    for row in matrix:
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if len(nz) != 1 or not np.isclose(abs(row[nz[0]]), 1.0, atol=1e-12):
            return None
        perm.append(int(nz[0]))
        signs.append(1 if row[nz[0]] > 0 else -1)
    if sorted(perm) != [0, 1, 2]:
        return None
    return tuple(perm), tuple(signs)


@dataclass
class RotationOp:
    """A sampled rotation action on fields.

    kind: "grid", "voxel" or "independent" (independent grid and voxel
    rotations). ``grid_matrix``/``voxel_matrix`` are orthonormal; grid
    reflections (det -1) are allowed. ``mode`` picks exact-lattice or
    trilinear spatial resampling; exact requires a signed permutation.
    """

    kind: str
    grid_matrix: Optional[np.ndarray] = None
    voxel_matrix: Optional[np.ndarray] = None
    mode: str = "trilinear"

    def __post_init__(self):
        if self.kind not in ("grid", "voxel", "independent"):
            raise ConfigError(f"unknown rotation kind {self.kind!r}")
        for m in (self.grid_matrix, self.voxel_matrix):
            if m is not None and np.abs(m @ m.T - np.eye(3)).max() > 1e-12:
                raise ConfigError("rotation matrices must be orthonormal")

    def apply(self, field: np.ndarray, basis: SHBasis) -> np.ndarray:
        out = field
        if self.voxel_matrix is not None:
            out = voxel_rotate(out, self.voxel_matrix, basis)
        if self.grid_matrix is not None:
            out = grid_rotate(out, self.grid_matrix, self.mode)
        return out


def grid_rotate(field: np.ndarray, rotation: np.ndarray, mode: str = "trilinear") -> np.ndarray:
    """Rotate the spatial lattice of a [B,X,Y,Z,C,V] field about its center."""
    field = np.asarray(field)
    if field.ndim != 6:
        raise ConfigError(f"grid_rotate expects a 6-axis field, got {field.shape}")
    rotation = np.asarray(rotation, dtype=np.float64)
    if mode == "exact":
        parts = signed_permutation_parts(rotation)
        if parts is None:
            raise ConfigError("exact-lattice mode requires a signed permutation matrix")
        return apply_cube_symmetry(field, *parts)
    if mode != "trilinear":
        raise ConfigError(f"unknown grid resampling mode {mode!r}")
    return _trilinear_rotate(field, rotation)


def apply_cube_symmetry(field: np.ndarray, perm: Tuple[int, ...], signs: Tuple[int, ...]) -> np.ndarray:
    """Exact lattice action of a signed permutation about the volume center.

    The signed permutation R maps output index i to source index R^-1 i
    (centered); on the lattice this is an axis permutation plus flips.
    """
    # out(i) = f(R^-1 i): R row r reads source axis perm[r] with sign
    out = np.transpose(field, (0, 1 + perm[0], 1 + perm[1], 1 + perm[2], 4, 5))
    for ax, s in enumerate(signs):
        if s < 0:
            out = np.flip(out, axis=1 + ax)
    return np.ascontiguousarray(out)


def _trilinear_rotate(field: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    b, sx, sy, sz, c, v = field.shape
    center = (np.array([sx, sy, sz]) - 1.0) / 2.0
    ii, jj, kk = np.meshgrid(np.arange(sx), np.arange(sy), np.arange(sz), indexing="ij")
    coords = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3) - center
    src = coords @ rotation + center  # row-vector form of R^-1 x

    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    flat = field.reshape(b, sx * sy * sz, c, v)
    out = np.zeros_like(flat)
    dims = np.array([sx, sy, sz])
    for corner in itertools.product((0, 1), repeat=3):
        corner = np.array(corner)
        idx = lo + corner
        weight = np.prod(np.where(corner, frac, 1.0 - frac), axis=1)
        inside = np.all((idx >= 0) & (idx < dims), axis=1)
        if not np.any(inside):
            continue
        lin = (idx[inside, 0] * sy + idx[inside, 1]) * sz + idx[inside, 2]
        out[:, inside] += weight[inside, None, None] * flat[:, lin]
    return out.reshape(field.shape)


def voxel_rotate(field: np.ndarray, rotation: np.ndarray, basis: SHBasis) -> np.ndarray:
    """Rotate every voxel's spherical signal (vertex axis last)."""
    op = rotation_operator(basis, rotation)
    return np.asarray(field) @ op.T
