import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scae.autograd import Node, Param, backward, sum_, square
from scae.errors import ConfigError
from scae.gradcheck import finite_diff_check
from scae.layers import (
    GdnSlim,
    GdnSlimPlus,
    GdnSwitch,
    SlimConv,
    SlimDeconv,
    WidthSet,
    gdn_param_count,
    make_gdn,
    normalize,
)

RNG = np.random.default_rng(99)


def test_widthset_validation():
    assert WidthSet((4, 8, 16)).K == 3
    with pytest.raises(ConfigError):
        WidthSet((8, 8))
    with pytest.raises(ConfigError):
        WidthSet((8, 4))
    with pytest.raises(ConfigError):
        WidthSet((0, 4))
    with pytest.raises(ConfigError):
        WidthSet(())


def _rand_conv(in_w=(3, 5), out_w=(4, 6), k=3, s=2, pad=(0, 1, 0, 1)):
    return SlimConv("c", in_w, out_w, k, s, pad, RNG)


def test_slim_conv_full_level_equals_plain_conv():
    layer = _rand_conv()
    x = RNG.normal(size=(2, 5, 8, 8))
    from scae.autograd import conv2d

    direct = conv2d(Node(x), Node(layer.kernel.value), Node(layer.bias.value),
                    layer.stride, layer.pad)
    assert np.array_equal(layer.forward(Node(x), 2).value, direct.value)


@pytest.mark.parametrize("k", [1, 2])
def test_slim_conv_slice_bitwise(k):
    layer = _rand_conv()
    wi = layer.in_widths[k - 1]
    x = RNG.normal(size=(1, wi, 8, 8))
    got = layer.forward(Node(x), k).value
    standalone = SlimConv("s", (wi,), (layer.out_widths[k - 1],), 3, 2,
                          layer.pad, RNG)
    layer.copy_slice_into(standalone, k)
    want = standalone.forward(Node(x), 1).value
    assert np.array_equal(got, want)


def test_slim_conv_shape_example():
    # widths {4,8} in, {6,12} out, stride 2: (1,4,8,8) -> (1,6,4,4)
    layer = SlimConv("c", (4, 8), (6, 12), 3, 2, (0, 1, 0, 1), RNG)
    out = layer.forward(Node(RNG.normal(size=(1, 4, 8, 8))), 1)
    assert out.value.shape == (1, 6, 4, 4)


def test_slim_conv_level_out_of_range():
    layer = _rand_conv()
    with pytest.raises(ConfigError):
        layer.forward(Node(np.zeros((1, 3, 8, 8))), 3)


def test_slim_deconv_slice_bitwise():
    layer = SlimDeconv("d", (4, 6), (3, 5), 4, 2, (1, 1, 1, 1), RNG)
    x = RNG.normal(size=(1, 4, 5, 5))
    got = layer.forward(Node(x), 1).value
    standalone = SlimDeconv("s", (4,), (3,), 4, 2, (1, 1, 1, 1), RNG)
    layer.copy_slice_into(standalone, 1)
    assert np.array_equal(got, standalone.forward(Node(x), 1).value)


def test_gdn_identity_configuration():
    # gamma = 0, beta = 1 leaves the input unchanged
    y = Node(RNG.normal(size=(1, 3, 4, 4)))
    out = normalize(y, Node(np.zeros((3, 3))), Node(np.ones(3)), inverse=False)
    assert np.allclose(out.value, y.value)
    outi = normalize(y, Node(np.zeros((3, 3))), Node(np.ones(3)), inverse=True)
    assert np.allclose(outi.value, y.value)


def test_gdn_hand_values():
    y = Node(np.array([1.0, 2.0]).reshape(1, 2, 1, 1))
    out = normalize(y, Node(np.eye(2)), Node(np.ones(2)), inverse=False)
    assert out.value.ravel() == pytest.approx([1 / np.sqrt(2), 2 / np.sqrt(5)], abs=1e-12)
    outi = normalize(y, Node(np.eye(2)), Node(np.ones(2)), inverse=True)
    assert outi.value.ravel() == pytest.approx([np.sqrt(2), 2 * np.sqrt(5)], abs=1e-12)


def test_gdn_row_scaling_identity():
    # scaling gamma row i by 4 and all y_j by 1/2 keeps channel i's output
    # denominator unchanged
    y = RNG.normal(size=(1, 3, 2, 2))
    gamma = np.abs(RNG.normal(size=(3, 3)))
    beta = np.ones(3)
    base = normalize(Node(y), Node(gamma), Node(beta), inverse=False).value
    g2 = gamma.copy()
    g2[1] *= 4.0
    den_base = beta[1] + np.einsum("j,njhw->nhw", gamma[1], y * y)
    den_new = beta[1] + np.einsum("j,njhw->nhw", g2[1], (y / 2) * (y / 2))
    assert np.allclose(den_base, den_new)


def test_igdn_odd_symmetry():
    y = RNG.normal(size=(1, 2, 3, 3))
    gamma = np.diag(np.abs(RNG.normal(size=2)))
    beta = np.ones(2)
    pos = normalize(Node(y), Node(gamma), Node(beta), inverse=True).value
    neg = normalize(Node(-y), Node(gamma), Node(beta), inverse=True).value
    assert np.allclose(neg, -pos)


def test_gdn_outputs_positive_denominator(rng):
    gdn = make_gdn("slim", "g", (3, 6))
    y = Node(rng.normal(size=(1, 6, 4, 4)) * 10)
    out = gdn.forward(y, 2)
    assert np.all(np.isfinite(out.value))


@pytest.mark.parametrize("variant", ["switch", "slim", "slim_plus"])
@pytest.mark.parametrize("k", [1, 2])
def test_gdn_slice_matches_standalone(variant, k):
    widths = (3, 5)
    gdn = make_gdn(variant, "g", widths)
    for p in gdn.params():
        p.value[...] = np.abs(RNG.normal(size=p.value.shape)) + 0.05
    y = RNG.normal(size=(1, widths[k - 1], 4, 4))
    got = gdn.forward(Node(y), k).value
    standalone = make_gdn(variant, "s", (widths[k - 1],))
    gdn.copy_slice_into(standalone, k)
    want = standalone.forward(Node(y), 1).value
    assert np.array_equal(got, want)


def test_slim_plus_degenerates_to_slim():
    widths = (2, 4)
    plus = GdnSlimPlus("p", widths)
    slim = GdnSlim("s", widths)
    shared = RNG.normal(size=(4, 4))
    plus.gamma.value[...] = shared
    slim.gamma.value[...] = shared
    sharedb = RNG.normal(size=4)
    plus.beta.value[...] = sharedb
    slim.beta.value[...] = sharedb
    y = RNG.normal(size=(2, 4, 3, 3))
    for k in (1, 2):
        yk = y[:, : widths[k - 1]]
        assert np.array_equal(plus.forward(Node(yk), k).value,
                              slim.forward(Node(yk), k).value)


def test_slim_plus_scale_modulation():
    plus = GdnSlimPlus("p", (2, 3))
    plus.gamma.value[...] = np.sqrt(np.eye(3) + 1e-12)
    plus.scale_gamma[0].value[...] = 2.0
    gamma, _ = plus.effective(1)
    assert np.allclose(gamma.value, 2.0 * (np.eye(2) + 1e-12))


def test_param_counts_reference_widths():
    widths = (48, 72, 96, 144, 192)
    assert gdn_param_count("switch", widths) == 74856
    assert gdn_param_count("slim", widths) == 37056
    assert gdn_param_count("slim_plus", widths) == 37076


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=64), min_size=2, max_size=6,
                unique=True))
def test_param_counts_closed_forms(widths):
    widths = tuple(sorted(widths))
    wmax = widths[-1]
    K = len(widths)
    assert gdn_param_count("switch", widths) == sum((w + 1) * w for w in widths)
    assert gdn_param_count("slim", widths) == (wmax + 1) * wmax
    assert gdn_param_count("slim_plus", widths) == (wmax + 1) * wmax + 4 * K
    for variant in ("switch", "slim", "slim_plus"):
        layer = make_gdn(variant, "g", widths)
        stored = sum(p.value.size for p in layer.params())
        assert stored == gdn_param_count(variant, widths)


@pytest.mark.parametrize("variant", ["switch", "slim", "slim_plus"])
def test_gdn_gradients_finite_diff(variant):
    gdn = make_gdn(variant, "g", (2, 4))
    y = Param(RNG.normal(size=(1, 2, 3, 3)), "y")
    params = [y] + gdn.params()

    def loss():
        return sum_(square(gdn.forward(y, 1)))

    rep = finite_diff_check(loss, params)
    assert rep["passed"], rep


@pytest.mark.parametrize("variant", ["switch", "slim", "slim_plus"])
def test_igdn_gradients_finite_diff(variant):
    gdn = make_gdn(variant, "g", (2, 4), inverse=True)
    y = Param(RNG.normal(size=(1, 4, 2, 2)), "y")
    params = [y] + gdn.params()

    def loss():
        return sum_(square(gdn.forward(y, 2)))

    rep = finite_diff_check(loss, params)
    assert rep["passed"], rep


def test_gdn_identity_passes_upstream_grad():
    gdn = GdnSlim("g", (3,))
    gdn.gamma.value[...] = 0.0
    gdn.beta.value[...] = np.sqrt(1.0 - 1e-6)
    y = Param(RNG.normal(size=(1, 3, 2, 2)), "y")
    out = gdn.forward(y, 1)
    backward(sum_(out))
    assert np.allclose(y.grad, np.ones_like(y.value))


def test_zero_gradient_outside_slice():
    gdn = GdnSlim("g", (2, 5))
    conv = _rand_conv(in_w=(2, 5), out_w=(2, 5))
    x = Param(RNG.normal(size=(1, 2, 6, 6)), "x")
    out = gdn.forward(conv.forward(x, 1), 1)
    backward(sum_(square(out)))
    assert np.all(conv.kernel.grad[2:, :, :, :] == 0)
    assert np.all(conv.kernel.grad[:, 2:, :, :] == 0)
    assert np.all(conv.bias.grad[2:] == 0)
    assert np.all(gdn.gamma.grad[2:, :] == 0)
    assert np.all(gdn.gamma.grad[:, 2:] == 0)
    assert np.all(gdn.beta.grad[2:] == 0)
    assert np.any(gdn.gamma.grad[:2, :2] != 0)
