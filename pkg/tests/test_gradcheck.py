import numpy as np
import pytest

from scae.autograd import Param, sum_, square, sqrt
from scae.errors import ConfigError
from scae.gradcheck import check_op, finite_diff_check


def test_passes_on_correct_gradient():
    x = np.random.default_rng(0).normal(size=(2, 3))

    def loss(xp):
        return sum_(square(xp))

    rep = check_op(loss, [x], names=["x"])
    assert rep["passed"]
    assert rep["max_rel_error"] <= 1e-6


def test_reports_per_parameter():
    rng = np.random.default_rng(1)

    def loss(a, b):
        return sum_(square(a)) + sum_(a * b)

    rep = check_op(loss, [rng.normal(size=3), rng.normal(size=3)], names=["a", "b"])
    assert set(rep["per_param"]) == {"a", "b"}


def test_rejects_non_differentiable_probe():
    def quantize(xp):
        return sum_(xp)

    quantize.differentiable = False
    with pytest.raises(ConfigError, match="not differentiable"):
        check_op(quantize, [np.ones(2)], names=["x"])


def test_rejects_by_name():
    x = Param(np.ones(2), "x")

    def quantize():
        return sum_(x)

    with pytest.raises(ConfigError):
        finite_diff_check(quantize, [x])


def test_nonfinite_values_reported_not_passed():
    x = Param(np.array([0.0, 1.0]), "x")

    def loss():
        return sum_(sqrt(x))  # derivative at 0 is infinite

    rep = finite_diff_check(loss, [x])
    assert not rep["passed"]
