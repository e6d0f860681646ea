"""Equivariant spatio-spherical toolkit.

Convolutional layers for voxel grids of spherical signals that commute
with spatial roto-translations/reflections and voxelwise spherical
rotations, plus an unsupervised spherical-deconvolution trainer, an
equivariance benchmark harness, synthetic data generators, and a CLI.
"""

__version__ = "0.1.0"
