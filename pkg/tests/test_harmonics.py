import numpy as np
import pytest
from numpy.polynomial import legendre as npleg

from esst.errors import ConfigError, NumericalError
from esst.sphere import healpix
from esst.sphere.harmonics import (
    SHBasis,
    fibonacci_sphere,
    num_coeffs,
    rotate_coeffs,
    rotation_block_matrix,
    sh_matrix,
)
from esst.sphere.rotate import rotate_sphere_signal
from esst.sphere.zonal import ZonalKernel, delta_kernel, zonal_convolve


def random_rotation(rng):
    """Uniform SO(3) sample via normalized quaternion."""
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


@pytest.fixture(scope="module")
def basis4():
    return SHBasis.build(healpix.healpix_centers(4), lmax=8, even_only=False)


@pytest.fixture(scope="module")
def basis4_even():
    return SHBasis.build(healpix.healpix_centers(4), lmax=8, even_only=True)


def test_constant_signal_fits_to_dc_only(basis4):
    c = 2.5
    coeffs = basis4.fit(np.full(192, c))
    assert np.isclose(coeffs[0], c * np.sqrt(4 * np.pi), atol=1e-10)
    assert np.abs(coeffs[1:]).max() < 1e-10


def test_fit_eval_roundtrip(basis4):
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal((5, basis4.n_coeffs))
    back = basis4.fit(basis4.evaluate(coeffs))
    assert np.abs(back - coeffs).max() < 1e-8


def test_even_basis_rejects_odd_content(basis4, basis4_even):
    rng = np.random.default_rng(1)
    full = rng.standard_normal(basis4.n_coeffs)
    layout = basis4.layout
    odd_mask = np.array([l % 2 == 1 for l, _ in layout])
    signal = basis4.evaluate(full)
    even_fit = basis4_even.fit(signal)
    residual = signal - basis4_even.evaluate(even_fit)
    odd_only = full.copy()
    odd_only[~odd_mask] = 0.0
    odd_signal = basis4.evaluate(odd_only)
    assert np.abs(residual - odd_signal).max() < 1e-9


def test_rank_deficient_basis_reports_condition():
    verts = np.tile(np.array([[0.0, 0.0, 1.0]]), (40, 1))
    with pytest.raises(NumericalError, match="condition"):
        SHBasis.build(verts, lmax=4)


def test_too_few_vertices_rejected():
    with pytest.raises(ConfigError):
        SHBasis.build(healpix.healpix_centers(1), lmax=8)


def test_coefficient_counts():
    assert num_coeffs(8, even_only=True) == 45
    assert num_coeffs(18, even_only=True) == 190
    assert num_coeffs(8, even_only=False) == 81


def test_equal_area_vertex_mean_of_harmonics():
    # Equal-area sampling: the vertex mean of any degree>=1 even harmonic
    # is small at nside=4. Zonal (m=0) harmonics carry the largest
    # pixel-quadrature bias (measured 4.4e-3 at l=4); all others sit
    # below 1e-3.
    verts = healpix.healpix_centers(4)
    mat = sh_matrix(verts, 8, even_only=True)
    means = np.abs(mat.mean(axis=0))
    layout = [(l, m) for l in range(0, 9, 2) for m in range(-l, l + 1)]
    assert means[1:].max() < 5e-3
    below_limit = np.array([m != 0 and l < 8 for l, m in layout])
    assert means[below_limit].max() < 1e-3


# -- rotations -------------------------------------------------------------------


def test_identity_rotation_leaves_signal(basis4):
    rng = np.random.default_rng(2)
    signal = basis4.evaluate(rng.standard_normal(basis4.n_coeffs))
    out = rotate_sphere_signal(signal, np.eye(3), basis4)
    assert np.abs(out - signal).max() < 1e-10


def test_rotation_followed_by_inverse(basis4):
    rng = np.random.default_rng(3)
    signal = basis4.evaluate(rng.standard_normal(basis4.n_coeffs))
    rot = random_rotation(rng)
    out = rotate_sphere_signal(rotate_sphere_signal(signal, rot, basis4), rot.T, basis4)
    assert np.abs(out - signal).max() < 1e-8


def test_constant_invariant_under_rotation(basis4):
    rng = np.random.default_rng(4)
    signal = np.full(192, 1.37)
    out = rotate_sphere_signal(signal, random_rotation(rng), basis4)
    assert np.abs(out - signal).max() < 1e-10


def test_rotation_blocks_are_orthogonal():
    rng = np.random.default_rng(5)
    rot = random_rotation(rng)
    block = rotation_block_matrix(rot, 8, even_only=False)
    assert np.abs(block.T @ block - np.eye(block.shape[0])).max() < 1e-10


def test_rotated_coeffs_match_evaluation_at_rotated_points():
    rng = np.random.default_rng(6)
    rot = random_rotation(rng)
    coeffs = rng.standard_normal(num_coeffs(6, even_only=False))
    pts = fibonacci_sphere(200)
    lhs = sh_matrix(pts @ rot, 6, even_only=False) @ coeffs  # f(R^-1 q)
    rhs = sh_matrix(pts, 6, even_only=False) @ rotate_coeffs(coeffs, rot, 6, even_only=False)
    assert np.abs(lhs - rhs).max() < 1e-10


# -- zonal convolution -------------------------------------------------------------


def test_dc_only_kernel_gives_isotropic_output(basis4_even):
    rng = np.random.default_rng(7)
    coeffs = rng.standard_normal(basis4_even.n_coeffs)
    kernel = ZonalKernel(degrees=tuple(range(0, 9, 2)), coeffs=(1.0, 0, 0, 0, 0))
    out = zonal_convolve(coeffs, kernel, basis4_even)
    assert np.abs(out[1:]).max() == 0.0
    # output dc is proportional to the input mean over the sphere
    assert np.isclose(out[0], np.sqrt(4 * np.pi) * coeffs[0])


def test_delta_kernel_is_identity(basis4_even):
    rng = np.random.default_rng(8)
    coeffs = rng.standard_normal(basis4_even.n_coeffs)
    out = zonal_convolve(coeffs, delta_kernel(basis4_even), basis4_even)
    assert np.abs(out - coeffs).max() < 1e-12


def test_missing_degree_fails(basis4_even):
    kernel = ZonalKernel(degrees=(0, 2), coeffs=(1.0, 0.5))
    with pytest.raises(ConfigError):
        zonal_convolve(np.zeros(basis4_even.n_coeffs), kernel, basis4_even)


def quadrature_convolve(zonal_coeffs, degrees, signal_fn, directions):
    """Oracle: (k*f)(q) = int k(q.p) f(p) dp by Gauss-Legendre x uniform phi.

    Exact for band-limited integrands: 64 GL nodes in z and 129 angles in
    phi integrate spherical polynomials far beyond degree 16.
    """
    zg, wg = npleg.leggauss(64)
    nphi = 129
    phis = 2 * np.pi * np.arange(nphi) / nphi
    zz, pp = np.meshgrid(zg, phis, indexing="ij")
    ss = np.sqrt(1 - zz**2)
    pts = np.stack([ss * np.cos(pp), ss * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    wts = np.repeat(wg, nphi) * (2 * np.pi / nphi)

    def kprof(t):
        out = np.zeros_like(t)
        for coeff, l in zip(zonal_coeffs, degrees):
            series = np.zeros(l + 1)
            series[l] = 1.0
            out += coeff * np.sqrt((2 * l + 1) / (4 * np.pi)) * npleg.legval(t, series)
        return out

    fvals = signal_fn(pts)
    return np.array([np.sum(wts * kprof(directions @ pts.T)[i] * fvals)
                     for i in range(directions.shape[0])])


def test_zonal_convolve_matches_quadrature():
    verts = healpix.healpix_centers(4)
    basis = SHBasis.build(verts, lmax=4, even_only=True)
    rng = np.random.default_rng(9)
    fodf = rng.standard_normal(basis.n_coeffs)
    rcoef = rng.standard_normal(3)
    kernel = ZonalKernel.from_even_list(rcoef)

    ours = basis.evaluate(zonal_convolve(fodf, kernel, basis))
    oracle = quadrature_convolve(
        rcoef, (0, 2, 4), lambda pts: sh_matrix(pts, 4, even_only=True) @ fodf, verts
    )
    assert np.abs(ours - oracle).max() < 1e-6


def test_zonal_convolve_commutes_with_rotation(basis4_even):
    # SO(3)-equivariance of the forward model
    rng = np.random.default_rng(10)
    fodf = rng.standard_normal(basis4_even.n_coeffs)
    kernel = ZonalKernel.from_even_list(rng.standard_normal(5))
    rot = random_rotation(rng)

    conv_then_rot = rotate_coeffs(zonal_convolve(fodf, kernel, basis4_even), rot, 8, True)
    rot_then_conv = zonal_convolve(rotate_coeffs(fodf, rot, 8, True), kernel, basis4_even)
    assert np.abs(conv_then_rot - rot_then_conv).max() < 1e-6
