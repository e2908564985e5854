"""Numba-compiled twins of the kernels in ``_kernels_numpy``.

Same contracts, same shapes.  Loops are ordered so the innermost axis is
contiguous in the arrays being read and written; ``fastmath`` stays off so
results are deterministic IEEE float64.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _conv_fwd(x, kernel, stride, out):
    n, ci, h, w = x.shape
    co, _, kh, kw = kernel.shape
    oh = out.shape[2]
    ow = out.shape[3]
    for b in range(n):
        for o in range(co):
            for i in range(ci):
                for oy in range(oh):
                    for ky in range(kh):
                        iy = oy * stride + ky
                        for kx in range(kw):
                            kv = kernel[o, i, ky, kx]
                            for ox in range(ow):
                                out[b, o, oy, ox] += kv * x[b, i, iy, ox * stride + kx]
    return out


def conv_fwd(x, kernel, stride):
    n, ci, h, w = x.shape
    co, ci2, kh, kw = kernel.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    out = np.zeros((n, co, oh, ow))
    return _conv_fwd(x, kernel, stride, out)


@njit(cache=True)
def _conv_scatter(g, kernel, stride, out):
    n, co, gh, gw = g.shape
    _, ci, kh, kw = kernel.shape
    for b in range(n):
        for o in range(co):
            for i in range(ci):
                for oy in range(gh):
                    for ky in range(kh):
                        iy = oy * stride + ky
                        for kx in range(kw):
                            kv = kernel[o, i, ky, kx]
                            for ox in range(gw):
                                out[b, i, iy, ox * stride + kx] += kv * g[b, o, oy, ox]
    return out


def conv_scatter(g, kernel, stride, out_h, out_w):
    n = g.shape[0]
    ci = kernel.shape[1]
    out = np.zeros((n, ci, out_h, out_w))
    return _conv_scatter(g, kernel, stride, out)


@njit(cache=True)
def _conv_kernel_grad(x, g, stride, dk):
    n, ci, h, w = x.shape
    _, co, oh, ow = g.shape
    kh = dk.shape[2]
    kw = dk.shape[3]
    for b in range(n):
        for o in range(co):
            for i in range(ci):
                for ky in range(kh):
                    for kx in range(kw):
                        acc = 0.0
                        for oy in range(oh):
                            iy = oy * stride + ky
                            for ox in range(ow):
                                acc += g[b, o, oy, ox] * x[b, i, iy, ox * stride + kx]
                        dk[o, i, ky, kx] += acc
    return dk


def conv_kernel_grad(x, g, stride, kh, kw):
    co = g.shape[1]
    ci = x.shape[1]
    dk = np.zeros((co, ci, kh, kw))
    return _conv_kernel_grad(x, g, stride, dk)


@njit(cache=True)
def _chan_affine(gamma, y2, beta, out):
    n, cj, h, w = y2.shape
    ci = gamma.shape[0]
    hw = h * w
    y2f = y2.reshape(n, cj, hw)
    outf = out.reshape(n, ci, hw)
    for b in range(n):
        for i in range(ci):
            for p in range(hw):
                outf[b, i, p] = beta[i]
            for j in range(cj):
                gv = gamma[i, j]
                for p in range(hw):
                    outf[b, i, p] += gv * y2f[b, j, p]
    return out


def chan_affine(gamma, y2, beta):
    n, cj, h, w = y2.shape
    out = np.empty((n, gamma.shape[0], h, w))
    return _chan_affine(gamma, np.ascontiguousarray(y2), beta, out)


@njit(cache=True)
def _chan_outer(g, y2, out):
    n, ci, h, w = g.shape
    cj = y2.shape[1]
    hw = h * w
    gf = g.reshape(n, ci, hw)
    y2f = y2.reshape(n, cj, hw)
    for b in range(n):
        for i in range(ci):
            for j in range(cj):
                acc = 0.0
                for p in range(hw):
                    acc += gf[b, i, p] * y2f[b, j, p]
                out[i, j] += acc
    return out


def chan_outer(g, y2):
    out = np.zeros((g.shape[1], y2.shape[1]))
    return _chan_outer(np.ascontiguousarray(g), np.ascontiguousarray(y2), out)
