"""Width-switchable layers.

Every layer here stores parameters at the largest registered width and can
execute at any smaller width by slicing the leading channel indices, so the
parameters of narrow configurations are nested inside the wide ones.
Executing a layer at level k is bitwise identical to a standalone layer
built from the parameter slice.

Three divisive-normalization variants are provided:

* ``switch``: independent gamma/beta per width level.
* ``slim``: one shared gamma/beta, sliced per level.
* ``slim_plus``: shared sliced gamma/beta plus four per-level scalars that
  rescale and shift them.

Positivity constraints are enforced by reparameterization: the stored
values are unconstrained, the effective beta is ``stored**2 + BETA_MIN``
and the effective gamma is ``stored**2``.
"""

from __future__ import annotations

import numpy as np

from .autograd import Node, Param, chan_affine, clamp_min, conv2d, deconv2d, sqrt, square
from .errors import ConfigError

BETA_MIN = 1e-6

GDN_VARIANTS = ("switch", "slim", "slim_plus")


class WidthSet(tuple):
    """Strictly increasing positive channel widths shared by all layers."""

    def __new__(cls, widths):
        ws = tuple(int(w) for w in widths)
        if not ws:
            raise ConfigError("WidthSet must not be empty")
        if any(w <= 0 for w in ws):
            raise ConfigError(f"widths must be positive, got {ws}")
        if any(a >= b for a, b in zip(ws, ws[1:])):
            raise ConfigError(f"widths must be strictly increasing, got {ws}")
        return super().__new__(cls, ws)

    @property
    def K(self) -> int:
        return len(self)


def _check_level(k: int, K: int):
    if not 1 <= k <= K:
        raise ConfigError(f"width level {k} out of range 1..{K}")


def _fan_in_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class SlimConv:
    """Strided convolution executable at any registered width pair."""

    def __init__(self, name, in_widths, out_widths, kernel_size, stride, pad, rng):
        if len(in_widths) != len(out_widths):
            raise ConfigError("in_widths and out_widths must have equal length")
        self.name = name
        self.in_widths = tuple(in_widths)
        self.out_widths = tuple(out_widths)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.pad = pad
        kh = self.kernel_size
        full = (self.out_widths[-1], self.in_widths[-1], kh, kh)
        fan_in = self.in_widths[-1] * kh * kh
        self.kernel = Param(_fan_in_init(rng, full, fan_in), f"{name}.kernel")
        self.bias = Param(np.zeros(self.out_widths[-1]), f"{name}.bias")

    @property
    def K(self) -> int:
        return len(self.in_widths)

    def params(self):
        return [self.kernel, self.bias]

    def forward(self, x, k: int) -> Node:
        _check_level(k, self.K)
        wi, wo = self.in_widths[k - 1], self.out_widths[k - 1]
        kern = self.kernel[:wo, :wi] if (wo, wi) != self.kernel.value.shape[:2] else self.kernel
        bias = self.bias[:wo] if wo != self.bias.value.shape[0] else self.bias
        return conv2d(x, kern, bias, self.stride, self.pad)

    def copy_slice_into(self, dst: "SlimConv", k: int):
        wi, wo = self.in_widths[k - 1], self.out_widths[k - 1]
        dst.kernel.value[...] = self.kernel.value[:wo, :wi]
        dst.bias.value[...] = self.bias.value[:wo]


class SlimDeconv:
    """Transposed convolution executable at any registered width pair."""

    def __init__(self, name, in_widths, out_widths, kernel_size, stride, pad, rng):
        if len(in_widths) != len(out_widths):
            raise ConfigError("in_widths and out_widths must have equal length")
        self.name = name
        self.in_widths = tuple(in_widths)
        self.out_widths = tuple(out_widths)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.pad = pad
        kh = self.kernel_size
        full = (self.in_widths[-1], self.out_widths[-1], kh, kh)
        fan_in = self.in_widths[-1] * kh * kh
        self.kernel = Param(_fan_in_init(rng, full, fan_in), f"{name}.kernel")
        self.bias = Param(np.zeros(self.out_widths[-1]), f"{name}.bias")

    @property
    def K(self) -> int:
        return len(self.in_widths)

    def params(self):
        return [self.kernel, self.bias]

    def forward(self, x, k: int) -> Node:
        _check_level(k, self.K)
        wi, wo = self.in_widths[k - 1], self.out_widths[k - 1]
        kern = self.kernel[:wi, :wo] if (wi, wo) != self.kernel.value.shape[:2] else self.kernel
        bias = self.bias[:wo] if wo != self.bias.value.shape[0] else self.bias
        return deconv2d(x, kern, bias, self.stride, self.pad)

    def copy_slice_into(self, dst: "SlimDeconv", k: int):
        wi, wo = self.in_widths[k - 1], self.out_widths[k - 1]
        dst.kernel.value[...] = self.kernel.value[:wi, :wo]
        dst.bias.value[...] = self.bias.value[:wo]


def _gdn_stored_init(w: int):
    # effective gamma starts near 0.1*I with a small positive off-diagonal
    # floor so the squared reparameterization keeps gradients alive there
    eff = np.full((w, w), 1e-3)
    np.fill_diagonal(eff, 0.1)
    return np.sqrt(eff)


def normalize(y, gamma_eff, beta_eff, inverse: bool) -> Node:
    """Divisive normalization: y_i / (beta_i + sum_j gamma_ij y_j^2)^(1/2).

    With ``inverse=True`` the multiplicative form y_i * (...)^(1/2) is used.
    """
    den = chan_affine(gamma_eff, square(y), beta_eff)
    root = sqrt(den)
    return y * root if inverse else y / root


class GdnSwitch:
    """Independent normalization parameters per width level."""

    variant = "switch"

    def __init__(self, name, widths, inverse=False):
        self.name = name
        self.widths = tuple(widths)
        self.inverse = inverse
        self.gammas = [
            Param(_gdn_stored_init(w), f"{name}.level{k + 1}.gamma")
            for k, w in enumerate(self.widths)
        ]
        self.betas = [
            Param(np.ones(w), f"{name}.level{k + 1}.beta")
            for k, w in enumerate(self.widths)
        ]

    @property
    def K(self) -> int:
        return len(self.widths)

    def params(self):
        return [*self.gammas, *self.betas]

    def effective(self, k: int):
        _check_level(k, self.K)
        gamma = square(self.gammas[k - 1])
        beta = square(self.betas[k - 1]) + BETA_MIN
        return gamma, beta

    def forward(self, y, k: int) -> Node:
        gamma, beta = self.effective(k)
        return normalize(y, gamma, beta, self.inverse)

    def param_count(self) -> int:
        return sum((w + 1) * w for w in self.widths)

    def copy_slice_into(self, dst: "GdnSwitch", k: int):
        dst.gammas[0].value[...] = self.gammas[k - 1].value
        dst.betas[0].value[...] = self.betas[k - 1].value


class GdnSlim:
    """One shared gamma/beta; level k uses the leading w_k slice."""

    variant = "slim"

    def __init__(self, name, widths, inverse=False):
        self.name = name
        self.widths = tuple(widths)
        self.inverse = inverse
        wmax = self.widths[-1]
        self.gamma = Param(_gdn_stored_init(wmax), f"{name}.gamma")
        self.beta = Param(np.ones(wmax), f"{name}.beta")

    @property
    def K(self) -> int:
        return len(self.widths)

    def params(self):
        return [self.gamma, self.beta]

    def effective(self, k: int):
        _check_level(k, self.K)
        w = self.widths[k - 1]
        g = self.gamma if w == self.widths[-1] else self.gamma[:w, :w]
        b = self.beta if w == self.widths[-1] else self.beta[:w]
        return square(g), square(b) + BETA_MIN

    def forward(self, y, k: int) -> Node:
        gamma, beta = self.effective(k)
        return normalize(y, gamma, beta, self.inverse)

    def param_count(self) -> int:
        w = self.widths[-1]
        return (w + 1) * w

    def copy_slice_into(self, dst: "GdnSlim", k: int):
        w = self.widths[k - 1]
        dst.gamma.value[...] = self.gamma.value[:w, :w]
        dst.beta.value[...] = self.beta.value[:w]


class GdnSlimPlus:
    """Shared sliced gamma/beta modulated by four per-level scalars.

    Effective values are clamped after modulation so the per-level bias can
    never drive beta below its positive floor.
    """

    variant = "slim_plus"

    def __init__(self, name, widths, inverse=False):
        self.name = name
        self.widths = tuple(widths)
        self.inverse = inverse
        wmax = self.widths[-1]
        self.gamma = Param(_gdn_stored_init(wmax), f"{name}.gamma")
        self.beta = Param(np.ones(wmax), f"{name}.beta")
        self.scale_gamma = [
            Param(1.0, f"{name}.level{k + 1}.scale_gamma") for k in range(self.K)
        ]
        self.bias_gamma = [
            Param(0.0, f"{name}.level{k + 1}.bias_gamma") for k in range(self.K)
        ]
        self.scale_beta = [
            Param(1.0, f"{name}.level{k + 1}.scale_beta") for k in range(self.K)
        ]
        self.bias_beta = [
            Param(0.0, f"{name}.level{k + 1}.bias_beta") for k in range(self.K)
        ]

    @property
    def K(self) -> int:
        return len(self.widths)

    def params(self):
        return [
            self.gamma,
            self.beta,
            *self.scale_gamma,
            *self.bias_gamma,
            *self.scale_beta,
            *self.bias_beta,
        ]

    def effective(self, k: int):
        _check_level(k, self.K)
        w = self.widths[k - 1]
        g = self.gamma if w == self.widths[-1] else self.gamma[:w, :w]
        b = self.beta if w == self.widths[-1] else self.beta[:w]
        shared_gamma = square(g)
        shared_beta = square(b) + BETA_MIN
        i = k - 1
        gamma = clamp_min(self.scale_gamma[i] * shared_gamma + self.bias_gamma[i], 0.0)
        beta = clamp_min(self.scale_beta[i] * shared_beta + self.bias_beta[i], BETA_MIN)
        return gamma, beta

    def forward(self, y, k: int) -> Node:
        gamma, beta = self.effective(k)
        return normalize(y, gamma, beta, self.inverse)

    def param_count(self) -> int:
        w = self.widths[-1]
        return (w + 1) * w + 4 * self.K

    def copy_slice_into(self, dst: "GdnSlimPlus", k: int):
        w = self.widths[k - 1]
        dst.gamma.value[...] = self.gamma.value[:w, :w]
        dst.beta.value[...] = self.beta.value[:w]
        dst.scale_gamma[0].value[...] = self.scale_gamma[k - 1].value
        dst.bias_gamma[0].value[...] = self.bias_gamma[k - 1].value
        dst.scale_beta[0].value[...] = self.scale_beta[k - 1].value
        dst.bias_beta[0].value[...] = self.bias_beta[k - 1].value


_GDN_CLASSES = {cls.variant: cls for cls in (GdnSwitch, GdnSlim, GdnSlimPlus)}


def make_gdn(variant, name, widths, inverse=False):
    if variant not in _GDN_CLASSES:
        raise ConfigError(f"unknown gdn variant {variant!r}, expected one of {GDN_VARIANTS}")
    return _GDN_CLASSES[variant](name, widths, inverse=inverse)


def gdn_param_count(variant, widths) -> int:
    """Learnable parameter count of one normalization layer."""
    widths = tuple(widths)
    wmax = widths[-1]
    if variant == "switch":
        return sum((w + 1) * w for w in widths)
    if variant == "slim":
        return (wmax + 1) * wmax
    if variant == "slim_plus":
        return (wmax + 1) * wmax + 4 * len(widths)
    raise ConfigError(f"unknown gdn variant {variant!r}")
