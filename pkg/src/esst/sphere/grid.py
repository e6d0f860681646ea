"""Hierarchical HEALPix vertex grids with parent/child maps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from ..errors import ConfigError
from . import healpix


@dataclass(frozen=True)
class GridLevel:
    nside: int
    vertices: np.ndarray  # (12*nside^2, 3) unit vectors, NESTED order

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]


class HierarchicalSphereGrid:
    """HEALPix grids at nside, nside/2, ..., down to ``min_nside``.

    Level 0 is the finest. In NESTED order the children of parent p at the
    next finer level are 4p..4p+3, so the parent map is ``index // 4`` and
    the child map is ``4*index + (0..3)``.
    """

    def __init__(self, nside: int, min_nside: int = 1):
        nside = healpix.check_nside(nside)
        min_nside = healpix.check_nside(min_nside)
        if min_nside > nside:
            raise ConfigError(f"min_nside {min_nside} exceeds nside {nside}")
        levels = []
        n = nside
        while n >= min_nside:
            levels.append(GridLevel(nside=n, vertices=healpix.healpix_centers(n)))
            if n == 1:
                break
            n //= 2
        self.levels: List[GridLevel] = levels

    @property
    def nside(self) -> int:
        return self.levels[0].nside

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level(self, index: int) -> GridLevel:
        if not 0 <= index < len(self.levels):
            raise ConfigError(f"no grid level {index} (have {len(self.levels)})")
        return self.levels[index]

    def level_for_nside(self, nside: int) -> GridLevel:
        for lv in self.levels:
            if lv.nside == nside:
                return lv
        raise ConfigError(f"no grid level with nside={nside}")

    def parent_index(self, level: int, index) -> np.ndarray:
        """Indices at level+1 (coarser) of vertices at ``level``."""
        lv = self.level(level)
        if level + 1 >= len(self.levels):
            raise ConfigError(f"level {level} has no coarser level")
        return healpix.nest_parent(index, lv.nside)

    def child_indices(self, level: int, index) -> np.ndarray:
        """Indices at level-1 (finer) of vertices at ``level``, shape (..., 4)."""
        lv = self.level(level)
        if level == 0:
            raise ConfigError("finest level has no children")
        return healpix.nest_children(index, lv.nside)

    def to_json_dict(self) -> Dict:
        return {
            "nside": self.nside,
            "levels": [
                {"nside": lv.nside, "vertices": lv.vertices.tolist()} for lv in self.levels
            ],
        }
