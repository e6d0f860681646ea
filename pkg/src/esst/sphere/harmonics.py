"""Real spherical harmonics: sampled bases, least-squares fits, rotations.

The real orthonormal basis used throughout:

    Y_{l,0}  = N_{l,0} P_l(cos t)
    Y_{l,m}  = sqrt(2) N_{l,m} P_l^m(cos t) cos(m p)      (m > 0)
    Y_{l,-m} = sqrt(2) N_{l,m} P_l^m(cos t) sin(m p)      (m > 0)

with the fully normalized associated Legendre functions evaluated by a
stable three-term recurrence (Condon-Shortley phase included). In
particular Y_{0,0} = 1/sqrt(4 pi) and the basis is L2-orthonormal on the
unit sphere.

Coefficients are stored flat in (l, m) order with l ascending and
m = -l..l; even-parity bases simply skip odd degrees.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, NumericalError


def coeff_layout(lmax: int, even_only: bool) -> List[Tuple[int, int]]:
    """Flat (l, m) index layout for a basis."""
    degrees = range(0, lmax + 1, 2) if even_only else range(0, lmax + 1)
    return [(l, m) for l in degrees for m in range(-l, l + 1)]


def num_coeffs(lmax: int, even_only: bool) -> int:
    return len(coeff_layout(lmax, even_only))


def _legendre_normalized(lmax: int, z: np.ndarray) -> np.ndarray:
    """Fully normalized P~_{l,m}(z) for all 0 <= m <= l <= lmax.

    Returns array [npoints, lmax+1, lmax+1] indexed [point, l, m];
    entries with m > l are zero. Normalization is chosen so that
    Y_{l,0}(t) = P~_{l,0}(cos t).
    """
    z = np.asarray(z, dtype=np.float64)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    n = z.shape[0]
    out = np.zeros((n, lmax + 1, lmax + 1))
    out[:, 0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    if lmax == 0:
        return out
    # diagonal: P~_{m,m}
    for m in range(1, lmax + 1):
        out[:, m, m] = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * out[:, m - 1, m - 1]
    # first off-diagonal: P~_{m+1,m}
    for m in range(0, lmax):
        out[:, m + 1, m] = np.sqrt(2.0 * m + 3.0) * z * out[:, m, m]
    # upward recurrence in l
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[:, l, m] = a * (z * out[:, l - 1, m] - b * out[:, l - 2, m])
    return out


def sh_matrix(vertices: np.ndarray, lmax: int, even_only: bool) -> np.ndarray:
    """Sampled basis matrix Y[vertex, coeff] at unit vectors ``vertices``."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ConfigError("vertices must have shape (n, 3)")
    z = np.clip(vertices[:, 2], -1.0, 1.0)
    phi = np.arctan2(vertices[:, 1], vertices[:, 0])
    leg = _legendre_normalized(lmax, z)
    layout = coeff_layout(lmax, even_only)
    cols = []
    sqrt2 = np.sqrt(2.0)
    for l, m in layout:
        if m == 0:
            cols.append(leg[:, l, 0])
        elif m > 0:
            cols.append(sqrt2 * leg[:, l, m] * np.cos(m * phi))
        else:
            cols.append(sqrt2 * leg[:, l, -m] * np.sin(-m * phi))
    return np.stack(cols, axis=1)


@dataclass
class SHBasis:
    """A sampled real SH basis with its least-squares fitting operator.

    Attributes:
        lmax: maximum degree.
        even_only: restrict to even degrees (antipodally symmetric signals).
        vertices: (n, 3) unit sample points.
        matrix: Y[vertex, coeff] synthesis matrix.
        fit_matrix: pseudoinverse, coeff = fit_matrix @ signal.
    """

    lmax: int
    even_only: bool
    vertices: np.ndarray
    matrix: np.ndarray
    fit_matrix: np.ndarray
    condition: float

    @classmethod
    def build(cls, vertices: np.ndarray, lmax: int, even_only: bool = False,
              max_condition: float = 1e8) -> "SHBasis":
        matrix = sh_matrix(vertices, lmax, even_only)
        if matrix.shape[0] < matrix.shape[1]:
            raise ConfigError(
                f"{matrix.shape[0]} vertices cannot determine {matrix.shape[1]} coefficients"
            )
        sv = np.linalg.svd(matrix, compute_uv=False)
        condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        if not np.isfinite(condition) or condition > max_condition:
            raise NumericalError(
                f"rank-deficient SH basis: condition number {condition:.3e} "
                f"(lmax={lmax}, {matrix.shape[0]} vertices)"
            )
        fit = np.linalg.pinv(matrix)
        return cls(lmax=lmax, even_only=even_only, vertices=np.asarray(vertices, float),
                   matrix=matrix, fit_matrix=fit, condition=condition)

    @property
    def n_coeffs(self) -> int:
        return self.matrix.shape[1]

    @property
    def layout(self) -> List[Tuple[int, int]]:
        return coeff_layout(self.lmax, self.even_only)

    def degrees(self) -> np.ndarray:
        return np.array([l for l, _ in self.layout])

    def fit(self, signal: np.ndarray) -> np.ndarray:
        """Least-squares coefficients of vertex samples (last axis = vertex)."""
        signal = np.asarray(signal)
        return signal @ self.fit_matrix.T

    def evaluate(self, coeffs: np.ndarray) -> np.ndarray:
        """Synthesize vertex samples from coefficients (last axis = coeff)."""
        coeffs = np.asarray(coeffs)
        return coeffs @ self.matrix.T


# -- rotations -----------------------------------------------------------------


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors (spiral lattice)."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


@lru_cache(maxsize=8)
def _rotation_sample_basis(lmax: int) -> Tuple[np.ndarray, tuple]:
    pts = fibonacci_sphere(max(4 * (lmax + 1) ** 2, 64))
    pinvs = tuple(
        np.linalg.pinv(sh_matrix(pts, l, even_only=False)[:, l * l:]) for l in range(lmax + 1)
    )
    return pts, pinvs


def degree_rotation_matrix(rotation: np.ndarray, ell: int) -> np.ndarray:
    """(2l+1) x (2l+1) matrix D with Y_l(R^-1 q) = Y_l(q) @ D (rows = q).

    Rotating coefficients c' = D @ c realizes f'(q) = f(R^-1 q) exactly for
    band-limited f. D is computed by least squares against exact basis
    evaluations on a fixed quasi-uniform point set; for a proper sample set
    this reproduces the Wigner rotation matrix to machine precision.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ConfigError("rotation must be a 3x3 matrix")
    pts, pinvs = _rotation_sample_basis(ell)
    b_pts = pts @ rotation  # row vectors: R^-1 applied to each point
    b = sh_matrix(b_pts, ell, even_only=False)[:, ell * ell:]
    return pinvs[ell] @ b


def rotation_block_matrix(rotation: np.ndarray, lmax: int, even_only: bool) -> np.ndarray:
    """Block-diagonal coefficient rotation for a full flat basis layout."""
    blocks = [degree_rotation_matrix(rotation, l)
              for l in (range(0, lmax + 1, 2) if even_only else range(0, lmax + 1))]
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    at = 0
    for b in blocks:
        k = b.shape[0]
        out[at:at + k, at:at + k] = b
        at += k
    return out


def rotate_coeffs(coeffs: np.ndarray, rotation: np.ndarray, lmax: int,
                  even_only: bool) -> np.ndarray:
    """Rotate flat coefficient vectors (last axis = coeff)."""
    block = rotation_block_matrix(rotation, lmax, even_only)
    return np.asarray(coeffs) @ block.T
