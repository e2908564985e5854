import numpy as np
import pytest

from scae.autograd import (
    Node,
    Param,
    backward,
    chan_affine,
    clamp_min,
    conv2d,
    deconv2d,
    getitem,
    log,
    mean,
    sqrt,
    square,
    sum_,
)
from scae.errors import ConfigError
from scae.gradcheck import check_op


def test_conv_identity_kernel():
    x = np.arange(48.0).reshape(1, 3, 4, 4)
    k = np.eye(3).reshape(3, 3, 1, 1)
    y = conv2d(Node(x), Node(k), Node(np.zeros(3)), 1, 0)
    assert np.array_equal(y.value, x)


def test_conv_hand_example():
    # [[1,2],[3,4]] against [[1,0],[0,1]] sums the diagonal: 1 + 4
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    k = np.array([[[[1.0, 0.0], [0.0, 1.0]]]])
    y = conv2d(Node(x), Node(k), Node(np.zeros(1)), 1, 0)
    assert y.value.shape == (1, 1, 1, 1)
    assert y.value[0, 0, 0, 0] == 5.0


def test_conv_shape_arithmetic():
    x = Node(np.zeros((1, 3, 16, 16)))
    k = Node(np.zeros((8, 3, 4, 4)))
    y = conv2d(x, k, Node(np.zeros(8)), 4, 0)
    assert y.value.shape == (1, 8, 4, 4)
    # floor((h + 2p - kh)/stride) + 1 with padding
    y2 = conv2d(Node(np.zeros((2, 3, 11, 9))), k, Node(np.zeros(8)), 2, 1)
    assert y2.value.shape == (2, 8, 5, 4)


def test_conv_shape_errors_name_dims():
    x = Node(np.zeros((1, 4, 8, 8)))
    k = Node(np.zeros((8, 3, 3, 3)))
    with pytest.raises(ConfigError, match="4 channels.*expects 3"):
        conv2d(x, k, Node(np.zeros(8)), 1, 0)
    with pytest.raises(ConfigError, match="bias"):
        conv2d(Node(np.zeros((1, 3, 8, 8))), k, Node(np.zeros(5)), 1, 0)


def test_deconv_shape_inverse():
    y = Node(np.zeros((1, 8, 4, 4)))
    k = Node(np.zeros((8, 3, 4, 4)))
    x = deconv2d(y, k, Node(np.zeros(3)), 4, 0)
    assert x.value.shape == (1, 3, 16, 16)


def test_deconv_identity_1x1():
    x = np.arange(18.0).reshape(1, 2, 3, 3)
    k = np.eye(2).reshape(2, 2, 1, 1)
    y = deconv2d(Node(x), Node(k), Node(np.zeros(2)), 1, 0)
    assert np.array_equal(y.value, x)


@pytest.mark.parametrize("trial", range(20))
def test_adjointness(rng, trial):
    """<conv(x), y> == <x, deconv(y)> with a shared kernel, bias zero."""
    s = int(rng.integers(1, 4))
    kh = int(rng.integers(1, 5))
    ci = int(rng.integers(1, 4))
    co = int(rng.integers(1, 4))
    oh = int(rng.integers(1, 5))
    h = (oh - 1) * s + kh
    x = rng.normal(size=(2, ci, h, h))
    k = rng.normal(size=(co, ci, kh, kh))
    y = rng.normal(size=(2, co, oh, oh))
    cv = conv2d(Node(x), Node(k), Node(np.zeros(co)), s, 0).value
    dv = deconv2d(Node(y), Node(k), Node(np.zeros(ci)), s, 0).value
    lhs = float((cv * y).sum())
    rhs = float((x * dv).sum())
    assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), 1e-12)


def test_backward_sum_gives_ones():
    x = Param(np.random.default_rng(0).normal(size=(2, 3, 4, 4)), "x")
    backward(sum_(x))
    assert np.array_equal(x.grad, np.ones_like(x.value))


def test_shared_param_grads_add():
    x = Param(np.array([2.0, 3.0]), "x")
    l1 = sum_(square(x))
    l2 = sum_(x * 5.0)
    backward(l1 + l2)
    assert np.array_equal(x.grad, 2 * x.value + 5.0)


def test_grad_accumulation_matches_separate_evaluations():
    rng = np.random.default_rng(4)
    x = Param(rng.normal(size=(1, 2, 6, 6)), "x")
    k = Param(rng.normal(size=(2, 2, 3, 3)), "k")
    b = Param(rng.normal(size=2), "b")

    def l1():
        return sum_(square(conv2d(x, k, b, 1, 1)))

    def l2():
        return mean(square(x)) * 3.0

    backward(l1() + l2())
    joint = {p.name: p.grad.copy() for p in (x, k, b)}
    for p in (x, k, b):
        p.zero_grad()
    backward(l1())
    g1 = {p.name: (p.grad.copy() if p.grad is not None else 0) for p in (x, k, b)}
    for p in (x, k, b):
        p.zero_grad()
    backward(l2())
    for p in (x, k, b):
        sep = g1[p.name] + (p.grad if p.grad is not None else 0)
        denom = np.maximum(np.abs(joint[p.name]), 1e-12)
        assert np.max(np.abs(joint[p.name] - sep) / denom) <= 1e-9


def test_backward_rejects_nonscalar():
    x = Param(np.ones(3), "x")
    with pytest.raises(ConfigError):
        backward(square(x))


def test_broadcast_gradients():
    a = Param(np.ones((2, 3)), "a")
    b = Param(np.array(2.0), "b")
    backward(sum_(a * b))
    assert np.array_equal(a.grad, np.full((2, 3), 2.0))
    assert b.grad == pytest.approx(6.0)


def test_getitem_grad_zero_outside():
    x = Param(np.random.default_rng(1).normal(size=(4, 4)), "x")
    backward(sum_(square(getitem(x, (slice(0, 2), slice(0, 2))))))
    assert np.all(x.grad[2:, :] == 0) and np.all(x.grad[:, 2:] == 0)
    assert np.allclose(x.grad[:2, :2], 2 * x.value[:2, :2])


@pytest.mark.parametrize("trial", range(20))
def test_conv_gradients_finite_diff(rng, trial):
    s = int(rng.integers(1, 3))
    x = rng.normal(size=(1, 2, 6, 6))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)

    def loss(xp, kp, bp):
        return sum_(square(conv2d(xp, kp, bp, s, 1)))

    rep = check_op(loss, [x, k, b], names=["x", "k", "b"])
    assert rep["passed"], rep


@pytest.mark.parametrize("trial", range(20))
def test_deconv_gradients_finite_diff(rng, trial):
    s = int(rng.integers(1, 3))
    x = rng.normal(size=(1, 3, 4, 4))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=2)

    def loss(xp, kp, bp):
        return sum_(square(deconv2d(xp, kp, bp, s, (1, 0, 1, 0))))

    rep = check_op(loss, [x, k, b], names=["x", "k", "b"])
    assert rep["passed"], rep


def test_elementwise_ops_finite_diff(rng):
    x = rng.uniform(0.5, 2.0, size=(3, 3))

    def loss(xp):
        return sum_(log(sqrt(xp)) + square(xp) / (xp + 1.0))

    rep = check_op(loss, [x], names=["x"])
    assert rep["passed"], rep


def test_clamp_min_grad_masks():
    x = Param(np.array([-1.0, 2.0]), "x")
    backward(sum_(clamp_min(x, 0.0)))
    assert np.array_equal(x.grad, np.array([0.0, 1.0]))


def test_chan_affine_finite_diff(rng):
    g = rng.normal(size=(3, 2))
    y2 = rng.normal(size=(2, 2, 3, 3))
    b = rng.normal(size=3)

    def loss(gp, yp, bp):
        return sum_(square(chan_affine(gp, yp, bp)))

    rep = check_op(loss, [g, y2, b], names=["gamma", "y2", "beta"])
    assert rep["passed"], rep


def test_outputs_stay_finite(rng):
    x = Node(rng.normal(size=(1, 3, 8, 8)))
    k = Node(rng.normal(size=(4, 3, 3, 3)))
    y = conv2d(x, k, Node(np.zeros(4)), 2, 1)
    assert np.all(np.isfinite(y.value))
