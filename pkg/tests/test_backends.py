import os
import subprocess
import sys

import numpy as np
import pytest

from scae import _kernels_numpy as knp

numba_kernels = pytest.importorskip("scae._kernels_numba")

RNG = np.random.default_rng(42)


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_conv_fwd_agrees(stride):
    x = RNG.normal(size=(2, 3, 15, 11))
    k = RNG.normal(size=(4, 3, 3, 3))
    a = knp.conv_fwd(x, k, stride)
    b = numba_kernels.conv_fwd(x, k, stride)
    assert a.shape == b.shape
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


@pytest.mark.parametrize("stride", [1, 2, 4])
def test_conv_scatter_agrees(stride):
    g = RNG.normal(size=(2, 4, 5, 6))
    k = RNG.normal(size=(4, 3, 4, 4))
    oh = (5 - 1) * stride + 4 + 1  # deliberately one row/col of tail zeros
    ow = (6 - 1) * stride + 4 + 2
    a = knp.conv_scatter(g, k, stride, oh, ow)
    b = numba_kernels.conv_scatter(g, k, stride, oh, ow)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))
    assert np.all(a[:, :, (5 - 1) * stride + 4 :, :] == 0)


def test_conv_kernel_grad_agrees():
    x = RNG.normal(size=(2, 3, 12, 12))
    g = RNG.normal(size=(2, 5, 5, 5))
    a = knp.conv_kernel_grad(x, g, 2, 4, 4)
    b = numba_kernels.conv_kernel_grad(x, g, 2, 4, 4)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def test_chan_kernels_agree():
    gamma = RNG.normal(size=(6, 4))
    y2 = RNG.normal(size=(3, 4, 5, 5))
    beta = RNG.normal(size=6)
    a = knp.chan_affine(gamma, y2, beta)
    b = numba_kernels.chan_affine(gamma, y2, beta)
    assert np.max(np.abs(a - b)) <= 1e-12
    g = RNG.normal(size=a.shape)
    c = knp.chan_outer(g, y2)
    d = numba_kernels.chan_outer(g, y2)
    assert np.max(np.abs(c - d)) <= 1e-12 * max(1.0, np.max(np.abs(c)))


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_env_flag_selects_backend(backend):
    env = dict(os.environ, SCAE_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", "import scae; print(scae.active_backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == backend


def test_bad_env_flag_rejected():
    env = dict(os.environ, SCAE_BACKEND="fortran")
    out = subprocess.run(
        [sys.executable, "-c", "import scae.backend"],
        env=env, capture_output=True, text=True,
    )
    assert out.returncode != 0
    assert "SCAE_BACKEND" in out.stderr
