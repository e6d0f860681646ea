"""Zonal (axially symmetric) spherical convolution via the Funk-Hecke rule.

A zonal kernel is described by its m=0 coefficients r_l about its symmetry
axis. Convolving a spherical function f with kernel profile k(cos gamma),

    (k * f)(q) = integral over the sphere of k(q . p) f(p) dp,

multiplies each degree of f by sqrt(4 pi / (2l+1)) * r_l.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from ..errors import ConfigError
from .harmonics import SHBasis


@dataclass(frozen=True)
class ZonalKernel:
    """Zonal coefficients per degree: ``coeffs[i]`` belongs to ``degrees[i]``."""

    degrees: tuple
    coeffs: tuple

    @classmethod
    def from_even_list(cls, values: Sequence[float]) -> "ZonalKernel":
        """Values for degrees 0, 2, 4, ... in order."""
        degrees = tuple(2 * i for i in range(len(values)))
        return cls(degrees=degrees, coeffs=tuple(float(v) for v in values))

    def degree_map(self) -> Dict[int, float]:
        return dict(zip(self.degrees, self.coeffs))

    def gains(self, basis: SHBasis) -> np.ndarray:
        """Per-flat-coefficient multiplier for ``basis``; fails on gaps."""
        table = self.degree_map()
        out = np.empty(basis.n_coeffs)
        for i, (l, _m) in enumerate(basis.layout):
            if l not in table:
                raise ConfigError(f"zonal kernel has no degree {l} entry")
            out[i] = np.sqrt(4.0 * np.pi / (2 * l + 1)) * table[l]
        return out


def zonal_convolve(coeffs: np.ndarray, kernel: ZonalKernel, basis: SHBasis) -> np.ndarray:
    """Funk-Hecke diagonal multiplication on flat coefficients (last axis)."""
    gains = kernel.gains(basis)
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-1] != gains.shape[0]:
        raise ConfigError(
            f"coefficient axis {coeffs.shape[-1]} does not match basis {gains.shape[0]}"
        )
    return coeffs * gains


def delta_kernel(basis: SHBasis) -> ZonalKernel:
    """The identity element: r_l = sqrt((2l+1)/(4 pi)) for each basis degree."""
    degrees = sorted({l for l, _ in basis.layout})
    return ZonalKernel(
        degrees=tuple(degrees),
        coeffs=tuple(float(np.sqrt((2 * l + 1) / (4.0 * np.pi))) for l in degrees),
    )
