"""Monte-Carlo equivariance benchmark over conv families and rotation kinds.

For a frozen map Conv and sampled rotations the error of one trial is

    || Conv(Rgrid(Rvoxel(f))) - Rgrid(Rvoxel(Conv(f))) ||^2 / || Conv(f) ||^2

with Rvoxel dropped for kind="grid" and Rgrid dropped for kind="voxel";
"independent" draws both independently. Means come with 95% normal CIs.

Test fields are band-limited per sphere (reference band limit of the
grid) and spatially smoothed, so that resampling error reflects the
operators rather than raw noise aliasing.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, NumericalError
from ..fields import as_field_tensor
from ..layers import ChebConv, E3SO3Conv, SpatialIsoConv
from ..sphere import HierarchicalSphereGrid, SHBasis, build_graph, num_coeffs, reference_bandlimit
from ..unet import UNetConfig, build
from .rotations import RotationOp, random_rotation

ROTATION_KINDS = ("grid", "voxel", "independent")
FAMILIES = ("gradient", "sh", "spherical", "e3so3")


@dataclass
class BenchConfig:
    grid_size: int = 8
    nside: int = 4
    trials: int = 100
    seed: int = 0
    families: Sequence[str] = FAMILIES
    scopes: Sequence[str] = ("single", "unet")
    include_reflections: bool = False
    unet_depth: int = 2
    unet_base: int = 4
    single_channels: int = 4
    degree: int = 5
    kernel_size: int = 3
    spatial_smooth: int = 2
    field_lmax: Optional[int] = None  # default: reference band limit of nside


@dataclass
class BenchResult:
    family: str
    scope: str
    rotation_kind: str
    mean: float
    ci95: float
    median: float
    trials: int
    seed: int


def smooth_spatial(data: np.ndarray, passes: int) -> np.ndarray:
    """Repeated (1,2,1)/4 smoothing along each spatial axis (edge padded)."""
    out = data
    for _ in range(passes):
        for ax in (1, 2, 3):
            padded = np.concatenate(
                [np.take(out, [0], axis=ax), out, np.take(out, [-1], axis=ax)], axis=ax
            )
            n = out.shape[ax]
            out = (
                np.take(padded, range(0, n), axis=ax)
                + 2.0 * np.take(padded, range(1, n + 1), axis=ax)
                + np.take(padded, range(2, n + 2), axis=ax)
            ) / 4.0
    return out


def random_band_limited_field(rng: np.random.Generator, grid_size: int,
                              basis: SHBasis, smooth: int) -> np.ndarray:
    coeffs = rng.standard_normal((1, grid_size, grid_size, grid_size, 1, basis.n_coeffs))
    fld = basis.evaluate(coeffs)
    return smooth_spatial(fld, smooth)


def sample_rotation_op(kind: str, rng: np.random.Generator,
                       include_reflections: bool) -> RotationOp:
    grid_m = None
    voxel_m = None
    if kind in ("grid", "independent"):
        grid_m = random_rotation(rng)
        if include_reflections and rng.random() < 0.5:
            grid_m = grid_m * np.array([1.0, 1.0, -1.0])[None, :]
    if kind in ("voxel", "independent"):
        voxel_m = random_rotation(rng)
    return RotationOp(kind=kind, grid_matrix=grid_m, voxel_matrix=voxel_m)


def _trial_errors(conv_fn, fields, outs, kind, basis, rng, include_reflections) -> List[float]:
    errors = []
    for fld, out in zip(fields, outs):
        op = sample_rotation_op(kind, rng, include_reflections)
        denom = float(np.sum(out**2))
        if denom == 0.0:
            raise NumericalError("||Conv(f)|| is zero; equivariance error undefined")
        lhs = conv_fn(op.apply(fld, basis))
        rhs = op.apply(out, basis)
        errors.append(float(np.sum((lhs - rhs) ** 2) / denom))
    return errors


def equivariance_error(conv_fn: Callable[[np.ndarray], np.ndarray], fields: Sequence[np.ndarray],
                       kind: str, basis: SHBasis, rng: np.random.Generator,
                       include_reflections: bool = False) -> Tuple[float, float, List[float]]:
    """Mean equivariance error and 95% CI over one rotation per field."""
    if kind not in ROTATION_KINDS:
        raise ConfigError(f"unknown rotation kind {kind!r}")
    outs = [conv_fn(fld) for fld in fields]
    errors = _trial_errors(conv_fn, fields, outs, kind, basis, rng, include_reflections)
    mean = float(np.mean(errors))
    stderr = float(np.std(errors, ddof=1) / np.sqrt(len(errors))) if len(errors) > 1 else 0.0
    return mean, 1.96 * stderr, errors


# -- frozen models per family -------------------------------------------------------


def _single_layer_fn(family: str, cfg: BenchConfig, grid: HierarchicalSphereGrid,
                     basis: SHBasis, rng: np.random.Generator) -> Callable:
    n_vertices = grid.level(0).n_vertices
    graph = build_graph(grid.level(0))
    if family == "e3so3":
        conv = E3SO3Conv(1, 1, cfg.degree, cfg.kernel_size, rng, bias=False)
        return lambda f: conv.forward(as_field_tensor(f), graph).data
    if family == "spherical":
        conv = ChebConv(1, 1, cfg.degree, rng, bias=False)
        return lambda f: conv.forward(as_field_tensor(f), graph).data
    if family == "gradient":
        conv = SpatialIsoConv(n_vertices, n_vertices, cfg.kernel_size, rng, bias=False)

        def fn(f):
            b, sx, sy, sz, c, v = f.shape
            folded = f.reshape(b, sx, sy, sz, c * v, 1)
            out = conv.forward(as_field_tensor(folded)).data
            return out.reshape(f.shape)

        return fn
    if family == "sh":
        ncoef = num_coeffs(reference_bandlimit(cfg.nside), even_only=False)
        sh_basis = SHBasis.build(grid.level(0).vertices, reference_bandlimit(cfg.nside),
                                 even_only=False)
        conv = SpatialIsoConv(ncoef, ncoef, cfg.kernel_size, rng, bias=False)

        def fn(f):
            coeffs = f @ sh_basis.fit_matrix.T
            b, sx, sy, sz, c, k = coeffs.shape
            out = conv.forward(as_field_tensor(coeffs.reshape(b, sx, sy, sz, c * k, 1))).data
            return out.reshape(coeffs.shape) @ sh_basis.matrix.T

        return fn
    raise ConfigError(f"unknown family {family!r}")


def _unet_fn(family: str, cfg: BenchConfig, basis: SHBasis,
             warmup_field: np.ndarray, seed: int) -> Callable:
    ucfg = UNetConfig(
        family=family,
        depth=cfg.unet_depth,
        base_filters=cfg.unet_base,
        patch_size=cfg.grid_size,
        nside=cfg.nside,
        degree=cfg.degree,
        kernel_size=cfg.kernel_size,
        head="field",
        in_channels=1,
        lmax=reference_bandlimit(cfg.nside),
        seed=seed,
    )
    model = build(ucfg)
    model.forward_field(warmup_field, training=True)  # freeze BN statistics
    return lambda f: model.forward_field(f, training=False).data


def bench_suite(cfg: BenchConfig) -> List[BenchResult]:
    """Run every (family, scope, rotation kind) cell of the benchmark table."""
    grid = HierarchicalSphereGrid(cfg.nside)
    lmax = cfg.field_lmax if cfg.field_lmax is not None else reference_bandlimit(cfg.nside)
    basis = SHBasis.build(grid.level(0).vertices, lmax, even_only=False)

    field_rng = np.random.default_rng(cfg.seed)
    fields = [
        random_band_limited_field(field_rng, cfg.grid_size, basis, cfg.spatial_smooth)
        for _ in range(cfg.trials)
    ]

    results = []
    for family in cfg.families:
        for scope in cfg.scopes:
            model_rng = np.random.default_rng(cfg.seed + 1)
            if scope == "single":
                conv_fn = _single_layer_fn(family, cfg, grid, basis, model_rng)
            elif scope == "unet":
                conv_fn = _unet_fn(family, cfg, basis, fields[0], cfg.seed + 1)
            else:
                raise ConfigError(f"unknown scope {scope!r}")
            outs = [conv_fn(fld) for fld in fields]
            for kind in ROTATION_KINDS:
                rot_rng = np.random.default_rng(cfg.seed + 1000)
                errors = _trial_errors(
                    conv_fn, fields, outs, kind, basis, rot_rng, cfg.include_reflections
                )
                mean = float(np.mean(errors))
                stderr = float(np.std(errors, ddof=1) / np.sqrt(len(errors)))
                results.append(
                    BenchResult(family, scope, kind, mean, 1.96 * stderr,
                                float(np.median(errors)), cfg.trials, cfg.seed)
                )
    return results


def results_to_csv(results: Sequence[BenchResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["family", "scope", "rotation_kind", "mean", "ci95", "median", "trials", "seed"])
    for r in results:
        writer.writerow(
            [r.family, r.scope, r.rotation_kind, f"{r.mean:.6f}", f"{r.ci95:.6f}",
             f"{r.median:.6f}", r.trials, r.seed]
        )
    return buf.getvalue()
