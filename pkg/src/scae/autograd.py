"""Minimal reverse-mode autodiff over float64 numpy arrays.

Every operation builds a node in a tape; ``backward`` walks the tape in
reverse topological order and accumulates gradients additively, so a
parameter used several times (or by several sub-networks sharing slices)
receives the sum of all its contributions.

Only the operations this codec needs are implemented: elementwise
arithmetic, sqrt/exp/log, clamping, reductions, basic slicing, convolution,
transposed convolution and the channel-mix used by divisive normalization.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import ConfigError, NumericError


class Node:
    """One value in the computation tape."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # -- operator sugar -----------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


class Param(Node):
    """Leaf node holding a learnable value.

    ``grad`` has the same shape as ``value`` and accumulates additively
    across every use within one loss evaluation.
    """

    __slots__ = ("name", "group")

    def __init__(self, value, name: str, group: str = "main"):
        super().__init__(np.array(value, dtype=np.float64))
        self.name = name
        self.group = group

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape})"


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def backward(loss: Node):
    """Populate ``grad`` on every node reachable from ``loss``.

    ``loss`` must be a finite scalar produced by recorded operations.
    """
    if loss.value.shape != ():
        raise ConfigError(f"backward expects a scalar loss, got shape {loss.value.shape}")
    if not np.isfinite(loss.value):
        raise NumericError("backward called on a non-finite loss")

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    loss.accumulate(np.array(1.0))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(g, shape):
    """Reduce gradient g down to the given (broadcast-source) shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- elementwise ------------------------------------------------------


def add(a, b):
    a, b = as_node(a), as_node(b)
    out = Node(a.value + b.value, (a, b))

    def back(g):
        a.accumulate(_unbroadcast(g, a.value.shape))
        b.accumulate(_unbroadcast(g, b.value.shape))

    out._backward = back
    return out


def sub(a, b):
    a, b = as_node(a), as_node(b)
    out = Node(a.value - b.value, (a, b))

    def back(g):
        a.accumulate(_unbroadcast(g, a.value.shape))
        b.accumulate(_unbroadcast(-g, b.value.shape))

    out._backward = back
    return out


def mul(a, b):
    a, b = as_node(a), as_node(b)
    out = Node(a.value * b.value, (a, b))

    def back(g):
        a.accumulate(_unbroadcast(g * b.value, a.value.shape))
        b.accumulate(_unbroadcast(g * a.value, b.value.shape))

    out._backward = back
    return out


def div(a, b):
    a, b = as_node(a), as_node(b)
    out = Node(a.value / b.value, (a, b))

    def back(g):
        a.accumulate(_unbroadcast(g / b.value, a.value.shape))
        b.accumulate(_unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    out._backward = back
    return out


def square(a):
    a = as_node(a)
    out = Node(a.value * a.value, (a,))

    def back(g):
        a.accumulate(2.0 * a.value * g)

    out._backward = back
    return out


def sqrt(a):
    a = as_node(a)
    root = np.sqrt(a.value)
    out = Node(root, (a,))

    def back(g):
        a.accumulate(g / (2.0 * root))

    out._backward = back
    return out


def exp(a):
    a = as_node(a)
    e = np.exp(a.value)
    out = Node(e, (a,))

    def back(g):
        a.accumulate(g * e)

    out._backward = back
    return out


def log(a):
    a = as_node(a)
    out = Node(np.log(a.value), (a,))

    def back(g):
        a.accumulate(g / a.value)

    out._backward = back
    return out


def clamp_min(a, lo: float):
    """max(a, lo); gradient is zero where the clamp is active."""
    a = as_node(a)
    mask = a.value > lo
    out = Node(np.where(mask, a.value, lo), (a,))

    def back(g):
        a.accumulate(np.where(mask, g, 0.0))

    out._backward = back
    return out


# -- reductions and shape ops ----------------------------------------


def sum_(a, axis=None):
    a = as_node(a)
    out = Node(a.value.sum(axis=axis), (a,))

    def back(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.value.shape).copy())
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.value.shape).copy())

    out._backward = back
    return out


def mean(a):
    a = as_node(a)
    n = a.value.size
    return mul(sum_(a), 1.0 / n)


def getitem(a, idx):
    a = as_node(a)
    out = Node(a.value[idx].copy(), (a,))

    def back(g):
        full = np.zeros_like(a.value)
        full[idx] = g
        a.accumulate(full)

    out._backward = back
    return out


# -- convolution ------------------------------------------------------


def _pad4(pad):
    if isinstance(pad, int):
        return (pad, pad, pad, pad)
    pt, pb, pl, pr = pad
    return (int(pt), int(pb), int(pl), int(pr))


def conv2d(x, kernel, bias, stride: int, pad):
    """Strided valid cross-correlation with zero padding plus bias.

    x: (n, c_in, h, w); kernel: (c_out, c_in, kh, kw); bias: (c_out,).
    ``pad`` is either a symmetric int or (top, bottom, left, right).
    Output spatial dims: floor((h + pad_v - kh)/stride) + 1.
    """
    x, kernel, bias = as_node(x), as_node(kernel), as_node(bias)
    if x.value.ndim != 4 or kernel.value.ndim != 4:
        raise ConfigError("conv2d expects 4-d input and kernel")
    co, ci, kh, kw = kernel.value.shape
    if x.value.shape[1] != ci:
        raise ConfigError(
            f"conv2d channel mismatch: input has {x.value.shape[1]} channels, "
            f"kernel expects {ci}"
        )
    if bias.value.shape != (co,):
        raise ConfigError(
            f"conv2d bias shape {bias.value.shape} does not match c_out={co}"
        )
    if stride < 1:
        raise ConfigError(f"conv2d stride must be >= 1, got {stride}")
    pt, pb, pl, pr = _pad4(pad)
    xp = np.pad(x.value, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    hp, wp = xp.shape[2], xp.shape[3]
    if hp < kh or wp < kw:
        raise ConfigError(
            f"conv2d input {hp}x{wp} (after padding) smaller than kernel {kh}x{kw}"
        )
    y = backend.conv_fwd(xp, kernel.value, stride)
    y = y + bias.value[None, :, None, None]
    out = Node(y, (x, kernel, bias))

    def back(g):
        g = np.ascontiguousarray(g)
        dxp = backend.conv_scatter(g, kernel.value, stride, hp, wp)
        h, w = x.value.shape[2], x.value.shape[3]
        x.accumulate(dxp[:, :, pt : pt + h, pl : pl + w])
        kernel.accumulate(backend.conv_kernel_grad(xp, g, stride, kh, kw))
        bias.accumulate(g.sum(axis=(0, 2, 3)))

    out._backward = back
    return out


def deconv2d(x, kernel, bias, stride: int, pad):
    """Transposed convolution: the adjoint of conv2d with a shared kernel.

    x: (n, c_in, h, w); kernel: (c_in, c_out, kh, kw); bias: (c_out,).
    Output spatial dims: (h - 1)*stride + kh - pad_v.
    """
    x, kernel, bias = as_node(x), as_node(kernel), as_node(bias)
    if x.value.ndim != 4 or kernel.value.ndim != 4:
        raise ConfigError("deconv2d expects 4-d input and kernel")
    ci, co, kh, kw = kernel.value.shape
    if x.value.shape[1] != ci:
        raise ConfigError(
            f"deconv2d channel mismatch: input has {x.value.shape[1]} channels, "
            f"kernel expects {ci}"
        )
    if bias.value.shape != (co,):
        raise ConfigError(
            f"deconv2d bias shape {bias.value.shape} does not match c_out={co}"
        )
    if stride < 1:
        raise ConfigError(f"deconv2d stride must be >= 1, got {stride}")
    pt, pb, pl, pr = _pad4(pad)
    n, _, h, w = x.value.shape
    full_h = (h - 1) * stride + kh
    full_w = (w - 1) * stride + kw
    if pt + pb >= full_h or pl + pr >= full_w:
        raise ConfigError("deconv2d padding removes the entire output")
    full = backend.conv_scatter(x.value, kernel.value, stride, full_h, full_w)
    y = full[:, :, pt : full_h - pb, pl : full_w - pr]
    y = y + bias.value[None, :, None, None]
    out = Node(np.ascontiguousarray(y), (x, kernel, bias))

    def back(g):
        gp = np.pad(g, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        x.accumulate(backend.conv_fwd(gp, kernel.value, stride))
        kernel.accumulate(backend.conv_kernel_grad(gp, x.value, stride, kh, kw))
        bias.accumulate(g.sum(axis=(0, 2, 3)))

    out._backward = back
    return out


def chan_affine(gamma, y2, beta):
    """out[n,i,p] = beta[i] + sum_j gamma[i,j] * y2[n,j,p].

    The 1x1 channel mix at the heart of divisive normalization.
    gamma: (c_out, c_in); y2: (n, c_in, h, w); beta: (c_out,).
    """
    gamma, y2, beta = as_node(gamma), as_node(y2), as_node(beta)
    ci = gamma.value.shape[1]
    if y2.value.shape[1] != ci:
        raise ConfigError(
            f"chan_affine channel mismatch: input has {y2.value.shape[1]}, "
            f"gamma expects {ci}"
        )
    val = backend.chan_affine(gamma.value, y2.value, beta.value)
    out = Node(val, (gamma, y2, beta))

    def back(g):
        g = np.ascontiguousarray(g)
        gamma.accumulate(backend.chan_outer(g, y2.value))
        zt = np.zeros(ci)
        y2.accumulate(backend.chan_affine(np.ascontiguousarray(gamma.value.T), g, zt))
        beta.accumulate(g.sum(axis=(0, 2, 3)))

    out._backward = back
    return out
