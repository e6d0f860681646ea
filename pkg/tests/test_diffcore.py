import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esst.diffcore import (
    Adam,
    EarlyStopper,
    PlateauSchedule,
    StepDecaySchedule,
    Tensor,
    grad_check,
    load_checkpoint,
    ops,
    parameter,
    read_tensor,
    save_checkpoint,
    write_tensor,
)
from esst.errors import NumericalError, ShapeError


def test_identity_graph():
    x = parameter([3.0])
    y = ops.add(x, 0.0)
    assert y.data[0] == 3.0


def test_affine_forward():
    x = parameter([3.0])
    y = ops.add(ops.mul(x, 2.0), 1.0)
    assert y.data[0] == 7.0


def test_three_op_chain_matches_composition():
    # y = exp(log(x^2)) evaluated through the tape vs plain composition
    x = parameter([1.7])
    y = ops.exp(ops.log(ops.square(x)))
    expected = np.exp(np.log(1.7**2))
    assert np.isclose(y.data[0], expected, rtol=0, atol=1e-15)


def test_square_gradient():
    x = parameter([3.0])
    y = ops.sum(ops.square(x))
    y.backward()
    assert np.isclose(x.grad[0], 6.0)


def test_constant_output_zero_gradient():
    x = parameter([3.0])
    y = ops.sum(ops.mul(x, 0.0))
    y.backward()
    assert np.all(x.grad == 0.0)


def test_unused_parameter_grad_is_zero():
    x = parameter([3.0])
    unused = parameter([1.0])
    y = ops.sum(ops.square(x))
    y.backward()
    assert unused.grad is None
    assert np.all(unused.grad_or_zero() == 0.0)


def test_backward_without_tape_fails():
    t = Tensor(np.ones(3))
    with pytest.raises(NumericalError):
        t.backward()


def test_random_five_op_graph_finite_difference():
    rng = np.random.default_rng(7)
    w = parameter(rng.standard_normal((4, 3)))
    b = parameter(rng.standard_normal((1, 3)))
    x = rng.standard_normal((5, 4))

    def fn():
        h = ops.apply_matrix(Tensor(x), w.data.T)  # constant path for shape only
        # differentiable path: x @ w + b -> softplus -> mean of squares
        z = ops.add(Tensor(x @ np.eye(4)), 0.0)
        z = ops.apply_matrix(z, np.eye(4))
        lin = ops.add(_matmul(z, w), b)
        act = ops.softplus(lin)
        return ops.mean(ops.square(act))

    report = grad_check(fn, {"w": w, "b": b}, h=1e-5, tol=1e-6)
    assert report.ok, report.failures()


def _matmul(x, w):
    # x: (n, k) tensor, w: (k, m) parameter; built from primitives
    # out[n, m] = sum_k x[n, k] w[k, m]
    xe = ops.reshape(x, (x.shape[0], x.shape[1], 1))
    we = ops.reshape(w, (1,) + w.shape)
    return ops.sum(ops.mul(xe, we), axis=1)


def test_grad_check_linear_op_near_exact():
    w = parameter(np.array([[1.0, -2.0], [0.5, 3.0]]))

    def fn():
        return ops.sum(ops.mul(w, np.array([[2.0, 1.0], [1.0, -1.0]])))

    report = grad_check(fn, {"w": w}, h=1e-5, tol=1e-9)
    assert report.ok
    assert report.max_rel_error < 1e-9


def test_grad_check_relu_kink_excluded():
    x = parameter(np.array([0.0, 1.0, -2.0]))

    def fn():
        return ops.sum(ops.relu(x))

    mask = np.array([True, False, False])  # exclude the exact kink
    report = grad_check(fn, {"x": x}, h=1e-5, tol=1e-9, exclude={"x": mask})
    assert report.ok


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(-5, 5, allow_nan=False),
    b=st.floats(-5, 5, allow_nan=False),
    c1=st.floats(-3, 3, allow_nan=False),
    c2=st.floats(-3, 3, allow_nan=False),
)
def test_linear_op_linearity(a, b, c1, c2):
    m = np.array([[2.0, -1.0], [0.5, 4.0]])
    x = np.array([a, b])
    y = np.array([c1, c2])
    lhs = ops.apply_matrix(Tensor(2.0 * x + 3.0 * y), m).data
    rhs = 2.0 * ops.apply_matrix(Tensor(x), m).data + 3.0 * ops.apply_matrix(Tensor(y), m).data
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_forward_deterministic():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((6, 6))
    r1 = ops.softmax(Tensor(x), axis=1).data
    r2 = ops.softmax(Tensor(x), axis=1).data
    assert np.array_equal(r1, r2)


def test_shape_mismatch_error_names_axes():
    with pytest.raises(ShapeError):
        ops.apply_matrix(Tensor(np.ones((2, 3))), np.ones((3, 5)), axis=-1)


# -- op-by-op finite differences ------------------------------------------------


@pytest.mark.parametrize(
    "op,domain",
    [
        (ops.exp, (-1.0, 1.0)),
        (ops.log, (0.5, 2.0)),
        (ops.sqrt, (0.5, 2.0)),
        (ops.square, (-2.0, 2.0)),
        (ops.softplus, (-3.0, 3.0)),
        (ops.absolute, (0.5, 2.0)),
        (ops.neg, (-2.0, 2.0)),
    ],
)
def test_elementwise_op_gradients(op, domain):
    rng = np.random.default_rng(11)
    lo, hi = domain
    x = parameter(rng.uniform(lo, hi, size=(3, 4)))

    def fn():
        return ops.sum(ops.square(op(x)))

    report = grad_check(fn, {"x": x}, h=1e-6, tol=1e-6)
    assert report.ok, report.failures()


@pytest.mark.parametrize("mode", ["zero", "edge"])
def test_pad_gradients(mode):
    rng = np.random.default_rng(3)
    x = parameter(rng.standard_normal((3, 4)))

    def fn():
        padded = ops.pad(x, ((1, 2), (0, 1)), mode=mode)
        return ops.sum(ops.square(padded))

    report = grad_check(fn, {"x": x}, h=1e-6, tol=1e-6)
    assert report.ok, report.failures()


def test_structural_op_gradients():
    rng = np.random.default_rng(5)
    x = parameter(rng.standard_normal((2, 4, 6)))

    def fn():
        y = ops.moveaxis(x, 0, 2)
        y = ops.reshape(y, (4, 12))
        y = ops.concat([y, y], axis=1)
        y = ops.repeat(y, 2, axis=0)
        y = y[1:5, 3:10]
        return ops.mean(ops.square(y))

    report = grad_check(fn, {"x": x}, h=1e-6, tol=1e-6)
    assert report.ok, report.failures()


def test_sparse_apply_matches_dense():
    import scipy.sparse as sp

    rng = np.random.default_rng(9)
    dense = rng.standard_normal((5, 5)) * (rng.random((5, 5)) < 0.5)
    x = parameter(rng.standard_normal((3, 5)))

    def fn_sparse():
        return ops.sum(ops.square(ops.apply_sparse(x, sp.csr_matrix(dense), axis=-1)))

    def fn_dense():
        return ops.sum(ops.square(ops.apply_matrix(x, dense, axis=-1)))

    assert np.isclose(fn_sparse().data, fn_dense().data, rtol=0, atol=1e-12)
    report = grad_check(fn_sparse, {"x": x}, h=1e-6, tol=1e-6)
    assert report.ok


# -- Adam -----------------------------------------------------------------------


def test_adam_zero_gradient_keeps_params():
    p = parameter([1.0, 2.0])
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    assert opt.t == 1
    assert np.array_equal(p.data, [1.0, 2.0])


def test_adam_first_step_hand_value():
    # scalar, g=1, defaults: m_hat = 1, v_hat = 1 -> update = -lr/(1+eps)
    p = parameter([0.0])
    opt = Adam([p], lr=0.1)
    p.grad = np.array([1.0])
    opt.step()
    expected = -0.1 * (1.0 / (1.0 + 1e-8))
    assert np.isclose(p.data[0], expected, rtol=0, atol=1e-18)


def test_adam_identical_params_stay_identical():
    p1 = parameter([0.3, -0.7])
    p2 = parameter([0.3, -0.7])
    opt = Adam([p1, p2], lr=0.05)
    for _ in range(5):
        p1.grad = np.array([0.2, -0.1])
        p2.grad = np.array([0.2, -0.1])
        opt.step()
    assert np.array_equal(p1.data, p2.data)


def test_adam_nonfinite_gradient_raises():
    p = parameter([0.0])
    opt = Adam([p], lr=0.1)
    p.grad = np.array([np.nan])
    with pytest.raises(NumericalError):
        opt.step()


def test_step_decay_schedule():
    p = parameter([0.0])
    opt = Adam([p], lr=1.0)
    sched = StepDecaySchedule({25: 0.5, 35: 0.5, 45: 0.5})
    for epoch in range(50):
        sched.on_epoch(opt, epoch)
    assert np.isclose(opt.lr, 0.125)


def test_plateau_schedule_divides_by_ten():
    p = parameter([0.0])
    opt = Adam([p], lr=1.0)
    sched = PlateauSchedule(factor=0.1, patience=3)
    losses = [1.0, 0.9, 0.9, 0.9, 0.9]  # 3 stale epochs after the improvement
    for epoch, loss in enumerate(losses):
        sched.on_epoch(opt, epoch, train_loss=loss)
    assert np.isclose(opt.lr, 0.1)


def test_early_stop_on_constant_loss():
    stop = EarlyStopper(patience=5)
    fired = [stop.update(1.0) for _ in range(6)]
    assert fired == [False, False, False, False, False, True]


# -- tensor file format -----------------------------------------------------------


def test_tensor_file_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    for arr in [
        rng.standard_normal((3, 4, 5)),
        rng.standard_normal(7).astype(np.float32),
        np.arange(6, dtype=np.int64).reshape(2, 3),
    ]:
        path = str(tmp_path / "t.esst")
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.dtype == arr.dtype
        assert np.array_equal(back, arr)


def test_tensor_file_header_contents(tmp_path):
    path = str(tmp_path / "t.esst")
    write_tensor(path, np.zeros((2, 3)))
    raw = open(path, "rb").read()
    assert raw[:4] == b"ESST"
    version = int.from_bytes(raw[4:6], "little")
    dtype_code = raw[6]
    rank = raw[7]
    assert (version, dtype_code, rank) == (1, 0, 2)
    dims = [int.from_bytes(raw[8 + 8 * i : 16 + 8 * i], "little") for i in range(2)]
    assert dims == [2, 3]


def test_tensor_file_truncated_fails(tmp_path):
    from esst.errors import DataError

    path = str(tmp_path / "t.esst")
    write_tensor(path, np.zeros(10))
    data = open(path, "rb").read()
    with open(path, "wb") as f:
        f.write(data[:-8])
    with pytest.raises(DataError):
        read_tensor(path)


def test_checkpoint_roundtrip(tmp_path):
    arrays = {"layer0.weight": np.arange(6.0).reshape(2, 3), "layer0.bias": np.zeros(2)}
    manifest = {"model": {"kind": "demo"}, "optimizer": {"t": 3}}
    d = str(tmp_path / "ckpt")
    save_checkpoint(d, manifest, arrays)
    m2, a2 = load_checkpoint(d)
    assert m2["model"] == {"kind": "demo"}
    assert set(a2) == set(arrays)
    assert np.array_equal(a2["layer0.weight"], arrays["layer0.weight"])
    # manifest is valid json with sorted keys
    text = open(os.path.join(d, "manifest.json")).read()
    assert json.loads(text)["tensors"] == sorted(arrays)
