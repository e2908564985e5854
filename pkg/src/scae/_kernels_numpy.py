"""Pure-numpy implementations of the hot inner kernels.

These are the fallback twins of the numba kernels in ``_kernels_numba``;
``scae.backend`` picks one set at import time.  All kernels take and return
C-contiguous float64 arrays and never modify their inputs.

Convolution is cross-correlation (no kernel flip).  ``conv_scatter`` is the
exact adjoint of ``conv_fwd`` with a shared kernel, which also makes it the
forward pass of the transposed convolution.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

NAME = "numpy"


def _windows(x, kh, kw, stride):
    n, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    return as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def conv_fwd(x, kernel, stride):
    """Valid cross-correlation.

    x: (n, c_in, h, w), kernel: (c_out, c_in, kh, kw) -> (n, c_out, oh, ow).
    """
    co, ci, kh, kw = kernel.shape
    win = _windows(x, kh, kw, stride)
    out = np.einsum("nihwyx,oiyx->nohw", win, kernel, optimize=True)
    return np.ascontiguousarray(out)


def conv_scatter(g, kernel, stride, out_h, out_w):
    """Adjoint of conv_fwd with respect to its input.

    g: (n, c_out, gh, gw), kernel: (c_out, c_in, kh, kw) -> (n, c_in, out_h, out_w).
    out_h/out_w must be at least (gh-1)*stride+kh; any excess rows/cols
    (inputs a strided conv never touched) receive zeros.
    """
    n, co, gh, gw = g.shape
    co2, ci, kh, kw = kernel.shape
    full_h = (gh - 1) * stride + kh
    full_w = (gw - 1) * stride + kw
    z = np.zeros((n, co, (gh - 1) * stride + 1, (gw - 1) * stride + 1))
    z[:, :, ::stride, ::stride] = g
    zp = np.pad(z, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    kf = np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    out = conv_fwd(zp, kf, 1)
    if out_h != full_h or out_w != full_w:
        padded = np.zeros((n, ci, out_h, out_w))
        padded[:, :, :full_h, :full_w] = out
        return padded
    return out


def conv_kernel_grad(x, g, stride, kh, kw):
    """Gradient of conv_fwd with respect to the kernel.

    x: (n, c_in, h, w), g: (n, c_out, oh, ow) -> (c_out, c_in, kh, kw).
    """
    n, co, oh, ow = g.shape
    win = _windows(x, kh, kw, stride)[:, :, :oh, :ow]
    out = np.einsum("nihwyx,nohw->oiyx", win, g, optimize=True)
    return np.ascontiguousarray(out)


def chan_affine(gamma, y2, beta):
    """Per-pixel channel mix: out[n,i,p] = beta[i] + sum_j gamma[i,j] * y2[n,j,p]."""
    out = np.einsum("ij,njhw->nihw", gamma, y2, optimize=True)
    out += beta[None, :, None, None]
    return np.ascontiguousarray(out)


def chan_outer(g, y2):
    """Gradient of chan_affine w.r.t. gamma: (n,i,h,w),(n,j,h,w) -> (i,j)."""
    return np.ascontiguousarray(np.einsum("nihw,njhw->ij", g, y2, optimize=True))
