import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastfca import autodiff as ad
from fastfca.autodiff import CTensor, Tensor
from fastfca.exceptions import GradientError, NonFiniteError, ShapeError


def leaf(rng, *shape, positive=False):
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x, requires_grad=True)


# -- forward values -------------------------------------------------------------
def test_softplus_zero_is_ln2():
    assert ad.softplus(Tensor(0.0)).item() == pytest.approx(np.log(2), abs=1e-15)


def test_sigmoid_zero_is_half():
    assert ad.sigmoid(Tensor(0.0)).item() == 0.5


def test_matmul_identity():
    A = np.random.default_rng(0).standard_normal((3, 3))
    np.testing.assert_array_equal(ad.matmul(Tensor(np.eye(3)), Tensor(A)).data, A)


def test_forward_is_bit_identical():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 7))
    w = leaf(rng, 4, 3, 5)

    def f():
        return ad.tsum(ad.softplus(ad.conv1d(Tensor(x), w)) * 1.7)

    assert f().item() == f().item()


def test_nonfinite_intermediate_raises():
    with pytest.raises(NonFiniteError) as err:
        ad.exp(Tensor(np.array([1000.0])))
    assert err.value.where == "exp"


def test_conv_shape_mismatch():
    rng = np.random.default_rng(2)
    with pytest.raises(ShapeError):
        ad.conv1d(Tensor(rng.standard_normal((1, 2, 5))), Tensor(rng.standard_normal((3, 4, 3))))


def test_log_floor_applies_in_forward_and_backward():
    # log(max(x, eps)): floored entries are constant, so their gradient is 0
    x = Tensor(np.array([0.0, 1e-20, 2.0]), requires_grad=True)
    y = ad.tsum(ad.log(x))
    assert y.item() == pytest.approx(2 * np.log(ad.EPS) + np.log(2.0))
    ad.backward(y)
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 0.5])


# -- backward ---------------------------------------------------------------------
def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    ad.backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_softplus_gradient_at_zero():
    x = Tensor(0.0, requires_grad=True)
    ad.backward(ad.softplus(x))
    assert x.grad == pytest.approx(0.5)


def test_nonscalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GradientError):
        ad.backward(x * 2.0)


def test_nondifferentiable_op_on_path_rejected():
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    with pytest.raises(GradientError):
        ad.backward(ad.tsum(ad.sign(x) * x))


def test_backward_is_linear_in_losses():
    rng = np.random.default_rng(3)
    x = leaf(rng, 4, 3)
    w = leaf(rng, 3, 2)

    def l1():
        return ad.tsum(ad.sigmoid(x @ w))

    def l2():
        return ad.tsum(ad.exp(x * 0.3) * 2.0)

    g1 = ad.gradients(l1(), [x, w])
    g2 = ad.gradients(l2(), [x, w])
    g12 = ad.gradients(l1() + l2(), [x, w])
    for a, b, c in zip(g1, g2, g12):
        np.testing.assert_allclose(a + b, c, rtol=1e-13, atol=1e-13)


# -- per-op finite differences ------------------------------------------------------
OPS = {
    "add": lambda a, b: ad.tsum((a + b) * (a + b)),
    "mul": lambda a, b: ad.tsum(a * b * a),
    "div": lambda a, b: ad.tsum(a / (b * b + 1.0)),
    "reciprocal": lambda a, b: ad.tsum(ad.reciprocal(ad.exp(a)) * b),
    "log": lambda a, b: ad.tsum(ad.log(a * a + 0.5) * b),
    "exp": lambda a, b: ad.tsum(ad.exp(a * 0.5) * b),
    "sqrt": lambda a, b: ad.tsum(ad.sqrt(a * a + 1.0) * b),
    "power": lambda a, b: ad.tsum(ad.power(a * a + 1.0, -0.5) * b),
    "sigmoid": lambda a, b: ad.tsum(ad.sigmoid(a) * b),
    "softplus": lambda a, b: ad.tsum(ad.softplus(a) * b),
    "mean": lambda a, b: ad.tsum(ad.mean(a * b, axis=(0,)) * np.arange(3.0)),
    "matmul": lambda a, b: ad.tsum(ad.sigmoid(a @ b.transpose(1, 0))),
    "einsum": lambda a, b: ad.tsum(ad.einsum("ij,kj->ik", a, b) ** 2),
    "getitem": lambda a, b: ad.tsum(a[1:, [0, 2]] * b[:3, :2]),
    "concat": lambda a, b: ad.tsum(ad.concat([a, b * 2.0], axis=0) ** 2),
    "stack": lambda a, b: ad.tsum(ad.stack([a, b], axis=1) ** 3),
    "reshape": lambda a, b: ad.tsum(a.reshape(3, 4) @ b.reshape(4, 3)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradient_matches_finite_differences(name):
    rng = np.random.default_rng(sorted(OPS).index(name))
    a = leaf(rng, 4, 3)
    b = leaf(rng, 4, 3)
    for x in (a, b):
        assert ad.grad_check(lambda: OPS[name](a, b), x) < 1e-6


def test_prelu_and_conv_gradients():
    rng = np.random.default_rng(4)
    x = leaf(rng, 2, 3, 9)
    w = leaf(rng, 4, 3, 5)
    bias = leaf(rng, 4)
    alpha = Tensor(np.full(4, 0.25), requires_grad=True)

    def f():
        return ad.tsum(ad.prelu(ad.conv1d(x, w, bias), alpha) ** 2)

    for p in (x, w, bias, alpha):
        assert ad.grad_check(f, p) < 1e-6


def test_logabsdet_gradient():
    rng = np.random.default_rng(5)
    A = Tensor(rng.standard_normal((3, 4, 4)) + 3 * np.eye(4), requires_grad=True)
    assert ad.grad_check(lambda: ad.tsum(ad.logabsdet(A)), A) < 1e-6


def test_complex_ops_gradient():
    rng = np.random.default_rng(6)
    qr, qi = leaf(rng, 2, 3, 3), leaf(rng, 2, 3, 3)
    xr, xi = leaf(rng, 2, 5, 3), leaf(rng, 2, 5, 3)

    def f():
        q, x = CTensor(qr, qi), CTensor(xr, xi)
        y = ad.ceinsum("fij,ftj->fti", q, x)
        return ad.tsum(ad.log(y.abs2() + 0.1)) - ad.tsum(ad.logdet_qqh(q))

    for p in (qr, qi, xr, xi):
        assert ad.grad_check(f, p) < 1e-5


def test_logdet_qqh_matches_numpy():
    rng = np.random.default_rng(7)
    Q = rng.standard_normal((5, 3, 3)) + 1j * rng.standard_normal((5, 3, 3))
    got = ad.logdet_qqh(CTensor.constant(Q)).data
    want = np.linalg.slogdet(Q @ np.conj(np.swapaxes(Q, -1, -2)))[1]
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_complex_product_matches_numpy():
    rng = np.random.default_rng(8)
    a = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    b = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    np.testing.assert_allclose((CTensor.constant(a) * CTensor.constant(b)).numpy(), a * b)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=8))
def test_sigmoid_softplus_identity(values):
    # d softplus / dx = sigmoid, for any input
    x = Tensor(np.array(values), requires_grad=True)
    ad.backward(ad.tsum(ad.softplus(x)))
    np.testing.assert_allclose(x.grad, ad.sigmoid(Tensor(np.array(values))).data, rtol=1e-12)


# -- grad_check helper -------------------------------------------------------------------
def test_grad_check_linear_is_exact():
    x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    assert ad.grad_check(lambda: ad.tsum(x * 3.0), x) < 1e-10


def test_grad_check_zero_gradient_leaf():
    x = Tensor(np.ones(3), requires_grad=True)
    y = Tensor(np.ones(2), requires_grad=True)
    assert ad.grad_check(lambda: ad.tsum(x * 2.0) + ad.tsum(y * 0.0), y) == 0.0


def test_grad_check_nonfinite_perturbation():
    x = Tensor(np.array([709.7]), requires_grad=True)
    with pytest.raises(NonFiniteError):
        ad.grad_check(lambda: ad.tsum(ad.exp(x)), x, step=1.0)


# -- Adam ---------------------------------------------------------------------------------
def test_adam_first_step_is_lr():
    p = np.zeros(4)
    state = ad.AdamState(lr=1e-3, eps=0.0)
    ad.adam_step([p], [np.ones(4)], state)
    np.testing.assert_allclose(p, -1e-3, rtol=1e-12)
    assert state.step == 1


def test_adam_zero_gradient_leaves_params():
    p = np.arange(3.0)
    ad.adam_step([p], [np.zeros(3)], ad.AdamState(lr=1e-2))
    np.testing.assert_array_equal(p, np.arange(3.0))


def test_adam_two_steps_hand_simulation():
    lr, b1, b2, g = 0.1, 0.9, 0.999, -2.0
    p = np.zeros(1)
    state = ad.AdamState(lr=lr, beta1=b1, beta2=b2, eps=1e-8)
    ad.adam_step([p], [np.array([g])], state)
    first = p.copy()
    ad.adam_step([p], [np.array([g])], state)
    m, v, x = 0.0, 0.0, 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + 1e-8)
    assert 0 < first[0] < p[0]
    assert p[0] == pytest.approx(x, rel=1e-12)


def test_adam_rejects_bad_input():
    with pytest.raises(ValueError):
        ad.adam_step([np.zeros(2)], [np.ones(2)], ad.AdamState(lr=0.0))
    with pytest.raises(NonFiniteError):
        ad.adam_step([np.zeros(2)], [np.array([1.0, np.nan])], ad.AdamState(lr=1e-3))
    with pytest.raises(ShapeError):
        ad.adam_step([np.zeros(2)], [np.ones(3)], ad.AdamState(lr=1e-3))


# -- checkpoints ----------------------------------------------------------------------------
def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    arrays = {"w": rng.standard_normal((3, 4)), "b": np.array(2.5),
              "q": rng.standard_normal(3) + 1j * rng.standard_normal(3)}
    path = tmp_path / "p.ffca"
    ad.save_arrays(path, arrays, metadata='{"a": 1}')
    loaded, meta = ad.load_arrays(path)
    assert meta == '{"a": 1}'
    assert set(loaded) == set(arrays)
    for k in arrays:
        np.testing.assert_array_equal(loaded[k], arrays[k])


def test_checkpoint_payload_is_little_endian_float64(tmp_path):
    path = tmp_path / "p.ffca"
    ad.save_arrays(path, {"x": np.array([1.0, -2.0])})
    raw = path.read_bytes()
    assert raw[:8] == b"FFCAPARM"
    assert raw[-16:] == np.array([1.0, -2.0], dtype="<f8").tobytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ffca"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ad.checkpoint.CheckpointError):
        ad.load_arrays(path)
