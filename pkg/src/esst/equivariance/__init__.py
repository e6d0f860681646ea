from .bench import (
    BenchConfig,
    BenchResult,
    bench_suite,
    equivariance_error,
    random_band_limited_field,
    results_to_csv,
    sample_rotation_op,
    smooth_spatial,
)
from .rotations import (
    RotationOp,
    apply_cube_symmetry,
    cube_symmetries,
    grid_rotate,
    random_rotation,
    signed_permutation_parts,
    voxel_rotate,
)

__all__ = [
    "BenchConfig",
    "BenchResult",
    "RotationOp",
    "apply_cube_symmetry",
    "bench_suite",
    "cube_symmetries",
    "equivariance_error",
    "grid_rotate",
    "random_band_limited_field",
    "random_rotation",
    "results_to_csv",
    "sample_rotation_op",
    "signed_permutation_parts",
    "smooth_spatial",
    "voxel_rotate",
]
