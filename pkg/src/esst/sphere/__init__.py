from . import healpix
from .graph import (
    SphereGraph,
    build_graph,
    calibrated_rho,
    combinatorial_laplacian,
    mean_edge_rho,
    power_iteration_lmax,
    reference_bandlimit,
    rescaled_laplacian,
    sh_misalignment,
)
from .grid import GridLevel, HierarchicalSphereGrid
from .harmonics import (
    SHBasis,
    coeff_layout,
    degree_rotation_matrix,
    fibonacci_sphere,
    num_coeffs,
    rotate_coeffs,
    rotation_block_matrix,
    sh_matrix,
)
from .rotate import rotate_sphere_signal, rotation_operator
from .zonal import ZonalKernel, delta_kernel, zonal_convolve

__all__ = [
    "GridLevel",
    "HierarchicalSphereGrid",
    "SHBasis",
    "SphereGraph",
    "ZonalKernel",
    "build_graph",
    "calibrated_rho",
    "coeff_layout",
    "combinatorial_laplacian",
    "degree_rotation_matrix",
    "delta_kernel",
    "fibonacci_sphere",
    "healpix",
    "num_coeffs",
    "mean_edge_rho",
    "power_iteration_lmax",
    "reference_bandlimit",
    "rescaled_laplacian",
    "sh_misalignment",
    "rotate_coeffs",
    "rotate_sphere_signal",
    "rotation_block_matrix",
    "rotation_operator",
    "sh_matrix",
    "zonal_convolve",
]
