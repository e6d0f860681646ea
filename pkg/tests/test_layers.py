import itertools

import numpy as np
import pytest

import esst.kernels as kernels
from esst.diffcore import Tensor, grad_check, ops, parameter
from esst.errors import ConfigError, NumericalError
from esst.fields import as_field_tensor
from esst.layers import (
    BatchNorm,
    ChebConv,
    E3SO3Conv,
    SpatialIsoConv,
    cheb_features,
    dense_kernel,
    pool,
    radius_bins,
    spatial_iso_conv,
    unpool,
)
from esst.sphere import HierarchicalSphereGrid, build_graph


@pytest.fixture(scope="module")
def graph2():
    return build_graph(HierarchicalSphereGrid(2).level(0))


@pytest.fixture(scope="module")
def graph1():
    return build_graph(HierarchicalSphereGrid(1).level(0))


def rand_field(rng, shape):
    return as_field_tensor(rng.standard_normal(shape))


def cube_symmetries():
    """All 48 signed permutations of the three spatial axes."""
    for perm in itertools.permutations((0, 1, 2)):
        for flips in itertools.product((False, True), repeat=3):
            yield perm, flips


def apply_cube_symmetry(data, perm, flips):
    """Apply a signed axis permutation to the spatial axes of a field array."""
    out = np.transpose(data, (0, 1 + perm[0], 1 + perm[1], 1 + perm[2], 4, 5))
    for ax, f in enumerate(flips):
        if f:
            out = np.flip(out, axis=1 + ax)
    return np.ascontiguousarray(out)


# -- radius bins -----------------------------------------------------------------


def test_radius_bins_size3():
    binmap, radii = radius_bins(3)
    assert len(radii) == 4
    assert np.allclose(radii, [0.0, 1.0, np.sqrt(2.0), np.sqrt(3.0)])
    assert binmap[1, 1, 1] == 0
    assert binmap[0, 1, 1] == 1
    assert binmap[0, 0, 1] == 2
    assert binmap[0, 0, 0] == 3


def test_even_kernel_size_rejected():
    with pytest.raises(ConfigError):
        radius_bins(4)
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        E3SO3Conv(1, 1, 2, 4, rng)


def test_dense_kernel_isotropy_exact():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((2, 3, 4))
    dense = dense_kernel(w, 3)
    for perm, flips in cube_symmetries():
        sym = np.transpose(dense, (0, 1, 2 + perm[0], 2 + perm[1], 2 + perm[2]))
        for ax, f in enumerate(flips):
            if f:
                sym = np.flip(sym, axis=2 + ax)
        assert np.array_equal(sym, dense)


# -- chebyshev features and conv ---------------------------------------------------


def test_cheb_features_k1_identity(graph2):
    rng = np.random.default_rng(2)
    x = rand_field(rng, (1, 2, 2, 2, 3, 48))
    feats = cheb_features(x, graph2, 1)
    assert np.array_equal(feats.data, x.data)


def test_cheb_features_matches_dense_polynomials(graph2):
    rng = np.random.default_rng(3)
    x = rand_field(rng, (1, 1, 1, 1, 1, 48))
    k = 4
    feats = cheb_features(x, graph2, k).data[0, 0, 0, 0]
    lap = graph2.laplacian.toarray()
    t = [np.eye(48), lap]
    for _ in range(2, k):
        t.append(2 * lap @ t[-1] - t[-2])
    for i in range(k):
        expected = t[i] @ x.data[0, 0, 0, 0, 0]
        assert np.abs(feats[i] - expected).max() < 1e-10


def test_cheb_conv_t0_identity(graph2):
    rng = np.random.default_rng(4)
    conv = ChebConv(2, 2, 3, rng, bias=False)
    w = np.zeros((2, 6))
    w[0, 0] = 1.0  # k=0, c=0 -> out 0
    w[1, 1] = 1.0  # k=0, c=1 -> out 1
    conv.weight.data[:] = w
    x = rand_field(rng, (1, 2, 2, 2, 2, 48))
    out = conv.forward(x, graph2)
    assert np.abs(out.data - x.data).max() < 1e-12


def test_cheb_conv_zero_weights(graph2):
    rng = np.random.default_rng(5)
    conv = ChebConv(2, 3, 4, rng, bias=False)
    conv.weight.data[:] = 0.0
    x = rand_field(rng, (1, 2, 2, 2, 2, 48))
    assert np.abs(conv.forward(x, graph2).data).max() == 0.0


def test_cheb_conv_matches_dense_oracle(graph2):
    rng = np.random.default_rng(6)
    conv = ChebConv(1, 1, 5, rng, bias=False)
    alpha = conv.weight.data[0]  # (K,) since C_in = 1
    x = rand_field(rng, (1, 1, 1, 1, 1, 48))
    out = conv.forward(x, graph2).data[0, 0, 0, 0, 0]

    lap = graph2.laplacian.toarray()
    t = [np.eye(48), lap]
    for _ in range(2, 5):
        t.append(2 * lap @ t[-1] - t[-2])
    oracle = sum(alpha[k] * t[k] for k in range(5)) @ x.data[0, 0, 0, 0, 0]
    assert np.abs(out - oracle).max() < 1e-10


def test_cheb_degree_guard(graph2):
    rng = np.random.default_rng(7)
    x = rand_field(rng, (1, 1, 1, 1, 1, 48))
    with pytest.raises(ConfigError):
        cheb_features(x, graph2, 33)


def test_feature_stack_plus_mix_equals_cheb_conv(graph2):
    rng = np.random.default_rng(8)
    conv = ChebConv(3, 2, 4, rng, bias=False)
    x = rand_field(rng, (1, 2, 1, 2, 3, 48))
    direct = conv.forward(x, graph2).data
    feats = cheb_features(x, graph2, 4)
    mixed = ops.channel_mix(feats, conv.weight, axis=4).data
    assert np.array_equal(direct, mixed)


# -- fused conv -----------------------------------------------------------------


def test_e3so3_center_bin_reduces_to_cheb(graph2):
    rng = np.random.default_rng(9)
    fused = E3SO3Conv(2, 3, 4, 3, rng, bias=False)
    fused.weight.data[:, :, 1:] = 0.0  # keep only the center (radius 0) bin
    cheb = ChebConv(2, 3, 4, rng, bias=False)
    cheb.weight.data[:] = fused.weight.data[:, :, 0]
    x = rand_field(rng, (1, 3, 3, 3, 2, 48))
    out_f = fused.forward(x, graph2).data
    out_c = cheb.forward(x, graph2).data
    assert np.abs(out_f - out_c).max() < 1e-12


def test_e3so3_matches_naive_double_sum(graph2):
    rng = np.random.default_rng(10)
    conv = E3SO3Conv(2, 2, 3, 3, rng, bias=False)
    x = rand_field(rng, (1, 8, 8, 8, 2, 48))
    out = conv.forward(x, graph2).data[0]

    feats = cheb_features(x, graph2, 3).data[0]  # (8,8,8,M,V)
    w_dense = dense_kernel(conv.weight.data, 3)  # (O,M,3,3,3)
    pos = (4, 5, 3)  # interior voxel
    oracle = np.zeros((2, 48))
    for di in range(-1, 2):
        for dj in range(-1, 2):
            for dk in range(-1, 2):
                src = feats[pos[0] + di, pos[1] + dj, pos[2] + dk]  # (M,V)
                oracle += np.einsum("om,mv->ov", w_dense[:, :, di + 1, dj + 1, dk + 1], src)
    assert np.abs(out[pos] - oracle).max() < 1e-10


def test_e3so3_commutes_with_exact_lattice_rotations(graph2):
    rng = np.random.default_rng(11)
    conv = E3SO3Conv(1, 2, 3, 3, rng, bias=True)
    x = rand_field(rng, (1, 6, 6, 6, 1, 48))
    conv_then_rot = {}
    out = conv.forward(x, graph2).data
    for perm, flips in cube_symmetries():
        rotated_in = as_field_tensor(apply_cube_symmetry(x.data, perm, flips))
        lhs = conv.forward(rotated_in, graph2).data
        rhs = apply_cube_symmetry(out, perm, flips)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_spatial_stage_shares_weights_across_vertices(graph2):
    # permuting the vertex axis commutes with the spatial convolution stage
    rng = np.random.default_rng(12)
    w = parameter(rng.standard_normal((2, 3, 4)))
    x = rng.standard_normal((1, 4, 4, 4, 3, 48))
    perm = rng.permutation(48)
    out = spatial_iso_conv(as_field_tensor(x), w, 3).data
    out_perm = spatial_iso_conv(as_field_tensor(x[..., perm]), w, 3).data
    assert np.array_equal(out[..., perm], out_perm)


def test_conv_linearity(graph2):
    rng = np.random.default_rng(13)
    conv = E3SO3Conv(2, 2, 3, 3, rng, bias=False)
    a = rand_field(rng, (1, 4, 4, 4, 2, 48))
    b = rand_field(rng, (1, 4, 4, 4, 2, 48))
    lhs = conv.forward(as_field_tensor(2.0 * a.data + 3.0 * b.data), graph2).data
    rhs = 2.0 * conv.forward(a, graph2).data + 3.0 * conv.forward(b, graph2).data
    assert np.abs(lhs - rhs).max() < 1e-10


def test_backend_parity_cython_vs_numpy():
    if not kernels.compiled_available():
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(14)
    feat = rng.standard_normal((2, 5, 4, 3, 6, 12))
    w = rng.standard_normal((4, 6, 4))
    binmap, _ = radius_bins(3)
    f_c = kernels.conv3d_iso_forward(feat, w, binmap, impl=kernels.get_backend("cython"))
    f_n = kernels.conv3d_iso_forward(feat, w, binmap, impl=kernels.get_backend("numpy"))
    assert np.abs(f_c - f_n).max() < 1e-12
    g = rng.standard_normal(f_c.shape)
    bi_c = kernels.conv3d_iso_backward_input(g, w, binmap, 6, impl=kernels.get_backend("cython"))
    bi_n = kernels.conv3d_iso_backward_input(g, w, binmap, 6, impl=kernels.get_backend("numpy"))
    assert np.abs(bi_c - bi_n).max() < 1e-12
    bw_c = kernels.conv3d_iso_backward_weights(g, feat, binmap, 4, impl=kernels.get_backend("cython"))
    bw_n = kernels.conv3d_iso_backward_weights(g, feat, binmap, 4, impl=kernels.get_backend("numpy"))
    assert np.abs(bw_c - bw_n).max() < 1e-12


# -- gradients -----------------------------------------------------------------


def test_cheb_conv_gradient(graph1):
    rng = np.random.default_rng(15)
    conv = ChebConv(2, 2, 3, rng)
    x = parameter(rng.standard_normal((1, 2, 2, 2, 2, 12)))
    target = rng.standard_normal((1, 2, 2, 2, 2, 12))

    def fn():
        out = conv.forward(x, graph1)
        return ops.sum(ops.square(ops.sub(out, target)))

    params = {"w": conv.weight, "b": conv.bias, "x": x}
    report = grad_check(fn, params, h=1e-5, tol=1e-6)
    assert report.ok, report.failures()


def test_e3so3_conv_gradient(graph1):
    rng = np.random.default_rng(16)
    conv = E3SO3Conv(1, 2, 2, 3, rng)
    x = parameter(rng.standard_normal((1, 3, 3, 3, 1, 12)))
    target = rng.standard_normal((1, 3, 3, 3, 2, 12))

    def fn():
        out = conv.forward(x, graph1)
        return ops.sum(ops.square(ops.sub(out, target)))

    params = {"w": conv.weight, "b": conv.bias, "x": x}
    report = grad_check(fn, params, h=1e-5, tol=1e-4)
    assert report.ok, report.failures()


def test_spatial_iso_conv_gradient():
    rng = np.random.default_rng(17)
    conv = SpatialIsoConv(2, 2, 3, rng)
    x = parameter(rng.standard_normal((1, 3, 3, 3, 2, 1)))

    def fn():
        out = conv.forward(x)
        return ops.sum(ops.square(out))

    report = grad_check(fn, {"w": conv.weight, "x": x}, h=1e-5, tol=1e-5)
    assert report.ok, report.failures()


# -- pooling -----------------------------------------------------------------


def test_pool_preserves_constants():
    x = as_field_tensor(np.full((1, 4, 4, 4, 2, 48), 3.25))
    out = pool(x)
    assert out.shape == (1, 2, 2, 2, 2, 12)
    assert np.abs(out.data - 3.25).max() < 1e-12
    up = unpool(out)
    assert np.abs(up.data - 3.25).max() < 1e-12


def test_pool_unpool_constant_identity():
    x = as_field_tensor(np.full((1, 2, 2, 2, 1, 48), -1.5))
    assert np.abs(unpool(pool(x)).data - x.data).max() < 1e-12


def test_pool_supervoxel_hand_mean():
    rng = np.random.default_rng(18)
    data = rng.standard_normal((1, 4, 4, 4, 1, 48))
    out = pool(as_field_tensor(data)).data
    # supervoxel (1,0,1), coarse vertex 3: mean over 2^3 voxels x 4 children
    block = data[0, 2:4, 0:2, 2:4, 0, 12:16]
    assert np.isclose(out[0, 1, 0, 1, 0, 3], block.mean(), atol=1e-12)


def test_pool_at_nside1_fails():
    x = as_field_tensor(np.zeros((1, 2, 2, 2, 1, 12)))
    with pytest.raises(ConfigError):
        pool(x)


def test_pool_odd_spatial_dims_pad():
    x = as_field_tensor(np.ones((1, 3, 3, 3, 1, 48)))
    out = pool(x)
    assert out.shape == (1, 2, 2, 2, 1, 12)
    assert np.abs(out.data - 1.0).max() < 1e-12


def test_pool_gradient():
    rng = np.random.default_rng(19)
    x = parameter(rng.standard_normal((1, 3, 2, 2, 1, 48)))

    def fn():
        return ops.sum(ops.square(unpool(pool(x))))

    report = grad_check(fn, {"x": x}, h=1e-5, tol=1e-6)
    assert report.ok, report.failures()


# -- normalization / activations ----------------------------------------------------


def test_relu_softplus_values():
    assert ops.relu(Tensor(np.array([-1.0]))).data[0] == 0.0
    assert ops.relu(Tensor(np.array([2.0]))).data[0] == 2.0
    assert np.isclose(ops.softplus(Tensor(np.array([0.0]))).data[0], np.log(2.0))


def test_batchnorm_train_statistics():
    rng = np.random.default_rng(20)
    bn = BatchNorm(3)
    x = as_field_tensor(rng.standard_normal((2, 4, 4, 4, 3, 12)) * 5 + 2)
    out = bn.forward(x, training=True).data
    mean = out.mean(axis=(0, 1, 2, 3, 5))
    var = out.var(axis=(0, 1, 2, 3, 5))
    assert np.abs(mean).max() < 1e-10
    assert np.abs(var - 1).max() < 1e-3


def test_batchnorm_eval_before_train_fails():
    bn = BatchNorm(2)
    x = as_field_tensor(np.zeros((1, 2, 2, 2, 2, 12)))
    with pytest.raises(NumericalError):
        bn.forward(x, training=False)


def test_batchnorm_running_stats_momentum():
    rng = np.random.default_rng(21)
    bn = BatchNorm(1, momentum=0.9)
    x = as_field_tensor(np.full((1, 2, 2, 2, 1, 12), 4.0))
    bn.forward(x, training=True)
    # running mean moves 10% of the way toward the batch mean 4.0
    assert np.isclose(bn.running_mean[0], 0.4)


def test_batchnorm_gradient():
    rng = np.random.default_rng(22)
    bn = BatchNorm(2)
    x = parameter(rng.standard_normal((1, 2, 2, 2, 2, 4)))

    def fn():
        return ops.sum(ops.square(bn.forward(x, training=True)))

    report = grad_check(fn, {"x": x, "gamma": bn.gamma, "beta": bn.beta}, h=1e-5, tol=1e-4)
    assert report.ok, report.failures()


def test_softmax_channels():
    rng = np.random.default_rng(23)
    x = Tensor(rng.standard_normal((1, 2, 2, 2, 5, 1)))
    p = ops.softmax(x, axis=4).data
    assert p.min() >= 0
    assert np.abs(p.sum(axis=4) - 1).max() < 1e-12
