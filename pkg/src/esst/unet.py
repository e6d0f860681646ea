"""Encoder-decoder assembly over the four convolution families.

The architecture follows the same scheme for every family: per level two
convolutions each followed by batchnorm+ReLU, mean pooling between
levels, a two-conv bottleneck, and a decoder that unpools, concatenates
the mirrored encoder features and applies two more convolutions. The
head is a final family convolution without normalization.

Families:
    e3so3      fused Chebyshev + isotropic spatial convolution
    spherical  per-voxel Chebyshev convolution (no spatial mixing)
    gradient   isotropic 3D convolution, vertex samples folded into channels
    sh         isotropic 3D convolution on SH coefficients as channels

Sphere pooling stops once the grid reaches nside=1; deeper levels pool
spatially only. ``paper_capacity_config`` reproduces the published
per-family trainable-parameter counts at base 16/depth 4: the four models
were capacity-equalized by their authors, which a uniform doubling
schedule cannot express, so each family carries its own width factor.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .diffcore import Tensor, ops
from .errors import ConfigError, ShapeError
from .fields import as_field_tensor
from .layers import BatchNorm, ChebConv, E3SO3Conv, SpatialIsoConv, crop_spatial, pool, unpool
from .sphere import HierarchicalSphereGrid, SHBasis, build_graph

FAMILIES = ("gradient", "sh", "spherical", "e3so3")

# capacity-equalized level widths at base 16 (see module docstring)
CAPACITY_WIDTH_FACTORS = {"e3so3": 0.75, "spherical": 1.0, "gradient": 1.25, "sh": 1.3125}


@dataclass
class UNetConfig:
    family: str = "e3so3"
    depth: int = 2
    base_filters: int = 8
    growth: float = 1.0
    width_factor: float = 1.0
    degree: int = 5
    kernel_size: int = 3
    in_channels: int = 1
    n_classes: int = 10
    head: str = "softmax-segmentation"  # or "softplus-fodf"
    tissues: int = 3
    patch_size: int = 16
    nside: int = 4
    lmax: int = 8
    bias: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.head not in ("softmax-segmentation", "softplus-fodf", "field"):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.base_filters < 1:
            raise ConfigError("base_filters must be >= 1")
        if self.depth < 0:
            raise ConfigError("depth must be >= 0")
        max_depth = int(math.floor(math.log2(self.patch_size))) if self.patch_size > 1 else 0
        if self.depth > max_depth:
            raise ConfigError(
                f"depth {self.depth} too large for patch size {self.patch_size}"
                f" (max allowed {max_depth})"
            )
        if self.head == "softplus-fodf" and self.family in ("gradient", "sh"):
            raise ConfigError("fodf head requires a sphere-valued family (spherical/e3so3)")

    def channels(self, level: int) -> int:
        return max(1, round(self.base_filters * self.width_factor * self.growth**level))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "UNetConfig":
        return cls(**json.loads(text))


def paper_capacity_config(family: str) -> UNetConfig:
    """Paper-scale segmentation configuration (nside 4, depth 4, base 16)."""
    return UNetConfig(
        family=family,
        depth=4,
        base_filters=16,
        growth=1.0,
        width_factor=CAPACITY_WIDTH_FACTORS[family],
        degree=5,
        kernel_size=3,
        in_channels=1,
        n_classes=10,
        head="softmax-segmentation",
        patch_size=16,
        nside=4,
        lmax=8,
    )


class _ConvBlock:
    """conv -> BN -> ReLU (BN/ReLU skipped for the head)."""

    def __init__(self, conv, bn: Optional[BatchNorm]):
        self.conv = conv
        self.bn = bn

    def parameters(self):
        out = list(self.conv.parameters())
        if self.bn is not None:
            out += self.bn.parameters()
        return out

    def forward(self, x, graph, training):
        out = self.conv.forward(x, graph)
        if self.bn is not None:
            out = self.bn.forward(out, training)
            out = ops.relu(out)
        return out


class UNet:
    """Config-driven model; build with :func:`build`."""

    def __init__(self, config: UNetConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.grid = HierarchicalSphereGrid(config.nside)
        self.sphere_levels = self.grid.n_levels - 1  # pools available before nside=1
        self.uses_sphere = config.family in ("spherical", "e3so3")
        if self.uses_sphere:
            self.graphs = [build_graph(lv) for lv in self.grid.levels]
        else:
            self.graphs = []
        self.sh_basis: Optional[SHBasis] = None
        if config.family == "sh" or config.head == "softplus-fodf":
            self.sh_basis = SHBasis.build(
                self.grid.level(0).vertices, config.lmax, even_only=True
            )

        cfg = config
        make = self._conv_factory(rng)
        self.encoder: List[Tuple[_ConvBlock, _ConvBlock]] = []
        prev = self._input_channels()
        for lv in range(cfg.depth):
            ch = cfg.channels(lv)
            self.encoder.append((make(prev, ch, lv), make(ch, ch, lv)))
            prev = ch
        bottleneck_ch = cfg.channels(cfg.depth)
        self.bottleneck = (
            make(prev, bottleneck_ch, cfg.depth),
            make(bottleneck_ch, bottleneck_ch, cfg.depth),
        )
        prev = bottleneck_ch
        self.decoder: List[Tuple[_ConvBlock, _ConvBlock]] = []
        for lv in reversed(range(cfg.depth)):
            ch = cfg.channels(lv)
            self.decoder.append((make(prev + ch, ch, lv), make(ch, ch, lv)))
            prev = ch
        if cfg.head == "softplus-fodf":
            head_out = cfg.tissues
        elif cfg.head == "field":
            head_out = self._input_channels()
        else:
            head_out = cfg.n_classes
        self.head = make(prev, head_out, 0, head=True)

    # -- construction helpers ------------------------------------------------

    def _input_channels(self) -> int:
        cfg = self.config
        n_vertices = 12 * cfg.nside * cfg.nside
        if cfg.family == "gradient":
            return cfg.in_channels * n_vertices
        if cfg.family == "sh":
            from .sphere import num_coeffs

            return cfg.in_channels * num_coeffs(cfg.lmax, even_only=True)
        return cfg.in_channels

    def _conv_factory(self, rng):
        cfg = self.config

        def make(cin, cout, level, head=False):
            if cfg.family == "e3so3":
                conv = E3SO3Conv(cin, cout, cfg.degree, cfg.kernel_size, rng, bias=cfg.bias)
            elif cfg.family == "spherical":
                conv = ChebConv(cin, cout, cfg.degree, rng, bias=cfg.bias)
            else:
                conv = SpatialIsoConv(cin, cout, cfg.kernel_size, rng, bias=cfg.bias)
            bn = None if head else BatchNorm(cout)
            return _ConvBlock(conv, bn)

        return make

    def _graph_for_level(self, level: int):
        if not self.uses_sphere:
            return None
        return self.graphs[min(level, self.sphere_levels)]

    # -- parameters ------------------------------------------------------------

    def blocks(self) -> List[Tuple[str, _ConvBlock]]:
        out = []
        for i, (a, b) in enumerate(self.encoder):
            out += [(f"enc{i}a", a), (f"enc{i}b", b)]
        out += [("bota", self.bottleneck[0]), ("botb", self.bottleneck[1])]
        for i, (a, b) in enumerate(self.decoder):
            out += [(f"dec{i}a", a), (f"dec{i}b", b)]
        out.append(("head", self.head))
        return out

    def parameters(self) -> List[Tensor]:
        out = []
        for _, block in self.blocks():
            out += block.parameters()
        return out

    def named_parameters(self) -> Dict[str, Tensor]:
        out = {}
        for name, block in self.blocks():
            out[f"{name}.weight"] = block.conv.weight
            if block.conv.bias is not None:
                out[f"{name}.bias"] = block.conv.bias
            if block.bn is not None:
                out[f"{name}.bn.gamma"] = block.bn.gamma
                out[f"{name}.bn.beta"] = block.bn.beta
        return out

    def named_buffers(self) -> Dict[str, np.ndarray]:
        out = {}
        for name, block in self.blocks():
            if block.bn is not None:
                for key, val in block.bn.buffers().items():
                    out[f"{name}.bn.{key}"] = val
        return out

    def load_buffers(self, buffers: Dict[str, np.ndarray]) -> None:
        for name, block in self.blocks():
            if block.bn is not None:
                block.bn.load_buffers(
                    {
                        "running_mean": buffers[f"{name}.bn.running_mean"],
                        "running_var": buffers[f"{name}.bn.running_var"],
                        "initialized": buffers[f"{name}.bn.initialized"],
                    }
                )

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def structure(self) -> List[Dict]:
        """Channel bookkeeping per block, for structural tests."""
        out = []
        for name, block in self.blocks():
            conv = block.conv
            out.append(
                {"name": name, "in": conv.in_channels, "out": conv.out_channels}
            )
        return out

    # -- input conversion ---------------------------------------------------------

    def prepare_input(self, field) -> Tensor:
        """Convert a raw [.., C, V] field to the family's internal layout."""
        x = as_field_tensor(field)
        cfg = self.config
        b, sx, sy, sz, c, v = x.shape
        if c != cfg.in_channels:
            raise ShapeError(f"field has {c} channels, model expects {cfg.in_channels}")
        if cfg.family == "gradient":
            return ops.reshape(x, (b, sx, sy, sz, c * v, 1))
        if cfg.family == "sh":
            coeffs = ops.apply_matrix(x, self.sh_basis.fit_matrix, axis=-1)
            return ops.reshape(coeffs, (b, sx, sy, sz, c * self.sh_basis.n_coeffs, 1))
        return x

    # -- forward -------------------------------------------------------------------

    def forward_features(self, x: Tensor, training: bool = False) -> Tensor:
        cfg = self.config
        skips = []
        shapes = []
        level = 0
        for a, b in self.encoder:
            g = self._graph_for_level(level)
            x = a.forward(x, g, training)
            x = b.forward(x, g, training)
            skips.append(x)
            shapes.append(x.shape[1:4])
            x = pool(x, spatial=True, sphere=self.uses_sphere and level < self.sphere_levels)
            level += 1
        g = self._graph_for_level(level)
        x = self.bottleneck[0].forward(x, g, training)
        x = self.bottleneck[1].forward(x, g, training)
        for i, (a, b) in enumerate(self.decoder):
            level -= 1
            x = unpool(x, spatial=True, sphere=self.uses_sphere and level < self.sphere_levels)
            x = crop_spatial(x, shapes[level])
            x = ops.concat([x, skips[level]], axis=4)
            g = self._graph_for_level(level)
            x = a.forward(x, g, training)
            x = b.forward(x, g, training)
        return x

    def forward_seg(self, field, training: bool = False) -> Tensor:
        """Per-voxel class probabilities [B, X, Y, Z, n_classes]."""
        if self.config.head != "softmax-segmentation":
            raise ConfigError("model head is not segmentation")
        x = self.prepare_input(field)
        feats = self.forward_features(x, training)
        logits6 = self.head.forward(feats, self._graph_for_level(0), training)
        logits = ops.mean(logits6, axis=-1)  # sphere mean keeps SO(3) invariance
        return ops.softmax(logits, axis=-1)

    def forward_field(self, field, training: bool = False) -> Tensor:
        """Field-to-field map in the input representation [B,X,Y,Z,C,V].

        Used by the equivariance benchmark: every family becomes an
        endomorphism of the same field space (gradient/sh outputs are
        unfolded/synthesized back to vertex samples).
        """
        if self.config.head != "field":
            raise ConfigError("model head is not field")
        cfg = self.config
        x = self.prepare_input(field)
        b, sx, sy, sz = x.shape[:4]
        feats = self.forward_features(x, training)
        out = self.head.forward(feats, self._graph_for_level(0), training)
        n_vertices = 12 * cfg.nside * cfg.nside
        if cfg.family == "gradient":
            return ops.reshape(out, (b, sx, sy, sz, cfg.in_channels, n_vertices))
        if cfg.family == "sh":
            coeffs = ops.reshape(
                out, (b, sx, sy, sz, cfg.in_channels, self.sh_basis.n_coeffs)
            )
            return ops.apply_matrix(coeffs, self.sh_basis.matrix, axis=-1)
        return out

    def forward_fodf(self, field, training: bool = False) -> Tuple[Tensor, Tensor]:
        """(vertex samples [B,X,Y,Z,T,V], even-SH coefficients [B,X,Y,Z,T,ncoef])."""
        if self.config.head != "softplus-fodf":
            raise ConfigError("model head is not fodf")
        x = self.prepare_input(field)
        feats = self.forward_features(x, training)
        raw = self.head.forward(feats, self._graph_for_level(0), training)
        vertex = ops.softplus(raw)
        coeffs = ops.apply_matrix(vertex, self.sh_basis.fit_matrix, axis=-1)
        return vertex, coeffs


def build(config: UNetConfig) -> UNet:
    return UNet(config)
