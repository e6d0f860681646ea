"""Rotation of sampled spherical signals through their SH expansion."""
from __future__ import annotations

import numpy as np

from .harmonics import SHBasis, rotation_block_matrix


def rotation_operator(basis: SHBasis, rotation: np.ndarray) -> np.ndarray:
    """Dense (V, V) matrix realizing f(q) -> f(R^-1 q) on vertex samples.

    Exact for signals band-limited to the basis; composed as
    synthesize o coefficient-rotation o fit.
    """
    block = rotation_block_matrix(rotation, basis.lmax, basis.even_only)
    return basis.matrix @ block @ basis.fit_matrix


def rotate_sphere_signal(signal: np.ndarray, rotation: np.ndarray, basis: SHBasis) -> np.ndarray:
    """Rotate vertex-sampled signals (vertex axis last)."""
    op = rotation_operator(basis, rotation)
    return np.asarray(signal) @ op.T
