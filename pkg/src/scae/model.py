"""Codec configuration and the width-switchable autoencoder.

Encoder: three strided convolutions, each followed by divisive
normalization.  Decoder mirrors it: each stage applies the inverse
normalization and then a transposed convolution; the final stage outputs
the image plane directly.  One switchable entropy model supplies rates.

Pixel values are scaled to [0, 1]; the tradeoff weights quoted anywhere in
this package pair with that scale and with the loss convention
``D + lambda * R`` (distortion-plus-weighted-rate, rate in bits per source
pixel).  Implementations normalizing to [0, 255] or weighting distortion
instead (``lambda * D + R``) need ``lambda -> 1/lambda`` and a scale
conversion before their tradeoffs are comparable.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np

from . import entropy as entropy_mod
from .autograd import Node, as_node, mean, square
from .entropy import FactorizedEntropyModel
from .errors import ConfigError
from .layers import SlimConv, SlimDeconv, WidthSet, make_gdn, GDN_VARIANTS

PSNR_CAP_DB = 100.0
PSNR_MSE_FLOOR = 1e-10


@dataclass(frozen=True)
class CodecConfig:
    widths: tuple = (4, 8, 16)
    input_channels: int = 3
    enc_kernels: tuple = (5, 3, 3)
    enc_strides: tuple = (4, 2, 2)
    gdn_variant: str = "slim_plus"
    support: int = 32
    bins_per_unit: int = 1

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "enc_kernels", tuple(int(v) for v in self.enc_kernels))
        object.__setattr__(self, "enc_strides", tuple(int(v) for v in self.enc_strides))
        WidthSet(self.widths)
        if self.gdn_variant not in GDN_VARIANTS:
            raise ConfigError(f"gdn_variant must be one of {GDN_VARIANTS}")
        if len(self.enc_kernels) != len(self.enc_strides):
            raise ConfigError("enc_kernels and enc_strides must have equal length")
        for k, s in zip(self.enc_kernels, self.enc_strides):
            if s < 1 or k < s:
                raise ConfigError(
                    f"every stage needs kernel >= stride >= 1, got kernel {k} stride {s}"
                )
        if self.input_channels < 1:
            raise ConfigError("input_channels must be positive")
        if self.support < 1 or self.bins_per_unit < 1:
            raise ConfigError("support and bins_per_unit must be positive")

    @property
    def K(self) -> int:
        return len(self.widths)

    @property
    def width_max(self) -> int:
        return self.widths[-1]

    @property
    def dec_kernels(self) -> tuple:
        return tuple(reversed(self.enc_kernels))

    @property
    def dec_strides(self) -> tuple:
        return tuple(reversed(self.enc_strides))

    @property
    def downsample_factor(self) -> int:
        return math.prod(self.enc_strides)

    def config_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["model"] = {
            "widths": ",".join(str(w) for w in self.widths),
            "input_channels": str(self.input_channels),
            "enc_kernels": ",".join(str(v) for v in self.enc_kernels),
            "enc_strides": ",".join(str(v) for v in self.enc_strides),
            "gdn_variant": self.gdn_variant,
            "support": str(self.support),
            "bins_per_unit": str(self.bins_per_unit),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self) -> bytes:
        return hashlib.sha256(self.config_text().encode()).digest()[:8]

    @classmethod
    def from_text(cls, text: str) -> "CodecConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if "model" not in cp:
            raise ConfigError("config text missing [model] section")
        sec = cp["model"]

        def ints(key):
            return tuple(int(v) for v in sec[key].split(","))

        try:
            return cls(
                widths=ints("widths"),
                input_channels=sec.getint("input_channels"),
                enc_kernels=ints("enc_kernels"),
                enc_strides=ints("enc_strides"),
                gdn_variant=sec["gdn_variant"],
                support=sec.getint("support"),
                bins_per_unit=sec.getint("bins_per_unit"),
            )
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad model config: {e}") from e


def desk_config(widths=(4, 8, 16), gdn_variant="slim_plus") -> CodecConfig:
    """Small configuration for quick single-core experiments."""
    return CodecConfig(widths=widths, enc_kernels=(5, 3, 3), enc_strides=(4, 2, 2),
                       gdn_variant=gdn_variant)


def full_config(gdn_variant="slim_plus") -> CodecConfig:
    """Production-scale configuration (used by the cost accounting)."""
    return CodecConfig(widths=(48, 72, 96, 144, 192), enc_kernels=(9, 5, 5),
                       enc_strides=(4, 2, 2), gdn_variant=gdn_variant)


def stage_pad(kernel: int, stride: int) -> tuple:
    """Zero padding making a stride-s stage map H exactly to H/s.

    Total padding is kernel - stride, split (smaller, larger); the
    transposed stage with the same tuple maps H back to H*s.
    """
    total = kernel - stride
    lo = total // 2
    hi = total - lo
    return (lo, hi, lo, hi)


def pad_to_factor(x: np.ndarray, factor: int):
    """Zero-pad bottom/right so spatial dims are multiples of ``factor``.

    Returns (padded, pad_h, pad_w)."""
    h, w = x.shape[-2], x.shape[-1]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return x, 0, 0
    return np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw))), ph, pw


def psnr(x, xhat) -> float:
    """Peak signal-to-noise ratio in dB for values in [0, 1].

    Capped at 100 dB when the MSE drops below 1e-10."""
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ConfigError(f"psnr shape mismatch: {x.shape} vs {xhat.shape}")
    mse = float(np.mean((x - xhat) ** 2))
    if mse < PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


@dataclass
class RDPoint:
    level: int
    width: int
    rate: float        # bits per source pixel
    psnr: float        # dB
    mse: float = 0.0


class SlimAutoencoder:
    """The width-switchable compressive autoencoder."""

    def __init__(self, config: CodecConfig, seed: int = 0):
        self.config = config
        self.lambdas = None
        K = config.K
        widths = config.widths
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

        self.enc = []
        in_w = (config.input_channels,) * K
        for i, (ks, st) in enumerate(zip(config.enc_kernels, config.enc_strides)):
            conv = SlimConv(f"enc{i}.conv", in_w, widths, ks, st, stage_pad(ks, st), rng)
            gdn = make_gdn(config.gdn_variant, f"enc{i}.gdn", widths, inverse=False)
            self.enc.append((conv, gdn))
            in_w = widths

        self.dec = []
        n = len(config.dec_kernels)
        for i, (ks, st) in enumerate(zip(config.dec_kernels, config.dec_strides)):
            out_w = widths if i < n - 1 else (config.input_channels,) * K
            igdn = make_gdn(config.gdn_variant, f"dec{i}.igdn", widths, inverse=True)
            deconv = SlimDeconv(f"dec{i}.deconv", widths, out_w, ks, st,
                                stage_pad(ks, st), rng)
            self.dec.append((igdn, deconv))

        self.entropy = FactorizedEntropyModel(
            widths, support=config.support, bins_per_unit=config.bins_per_unit,
            name="entropy",
        )

    # -- parameters ----------------------------------------------------
    def params(self):
        out = []
        for conv, gdn in self.enc:
            out += conv.params() + gdn.params()
        for igdn, deconv in self.dec:
            out += igdn.params() + deconv.params()
        out += self.entropy.params()
        return out

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    # -- transform -------------------------------------------------------
    def _check_padded(self, x):
        f = self.config.downsample_factor
        h, w = x.shape[-2], x.shape[-1]
        if h % f or w % f:
            raise ConfigError(
                f"input {h}x{w} not padded to a multiple of {f}; pad before encoding"
            )

    def encode_latent(self, x, k: int) -> Node:
        """Analysis transform at width level k.  Input must be padded."""
        x = as_node(x)
        self._check_padded(x.value)
        t = x
        for conv, gdn in self.enc:
            t = conv.forward(t, k)
            t = gdn.forward(t, k)
        return t

    def decode_latent(self, z, k: int) -> Node:
        """Synthesis transform at width level k."""
        z = as_node(z)
        want = self.config.widths[k - 1]
        if z.value.shape[1] != want:
            raise ConfigError(
                f"latent has {z.value.shape[1]} channels but level {k} expects {want}"
            )
        t = z
        for igdn, deconv in self.dec:
            t = igdn.forward(t, k)
            t = deconv.forward(t, k)
        return t

    def latent_shape(self, batch: int, padded_h: int, padded_w: int) -> tuple:
        f = self.config.downsample_factor
        return (batch, self.config.width_max, padded_h // f, padded_w // f)

    def make_noise(self, batch: int, padded_h: int, padded_w: int, rng) -> np.ndarray:
        """One full-width noise tensor, sliced per level inside the joint loss."""
        shape = self.latent_shape(batch, padded_h, padded_w)
        return entropy_mod.add_uniform_noise(np.zeros(shape), rng)

    # -- losses ----------------------------------------------------------
    def loss_single(self, x, k: int, lam: float, noise: np.ndarray):
        """D + lambda*R at one level, with the additive-noise proxy.

        x: (b, c, H, W) in [0, 1], any size (padded internally); noise: a
        full-width tensor from :meth:`make_noise`.  Distortion is the MSE
        over the original (unpadded) region; rate is bits per source pixel.
        Returns (loss_node, distortion, rate_bpp).
        """
        x = np.asarray(x, dtype=np.float64)
        b, c, H, W = x.shape
        xp, _, _ = pad_to_factor(x, self.config.downsample_factor)
        z = self.encode_latent(Node(xp), k)
        w_k = self.config.widths[k - 1]
        z_noisy = z + noise[:, :w_k]
        xhat_full = self.decode_latent(z_noisy, k)
        xhat = xhat_full[:, :, :H, :W]
        dist = mean(square(xhat - Node(x)))
        bits = self.entropy.rate_bits(z_noisy, k)
        rate = bits * (1.0 / (b * H * W))
        loss = dist + lam * rate
        return loss, float(dist.value), float(rate.value)

    def loss_joint(self, x, lambdas, noise: np.ndarray):
        """Sum over levels of D_k + lambda_k * R_k, sharing one noise draw.

        Returns (loss_node, [(distortion, rate_bpp) per level]).
        """
        if len(lambdas) != self.config.K:
            raise ConfigError(
                f"need {self.config.K} tradeoffs, got {len(lambdas)}"
            )
        total = None
        pairs = []
        for k in range(1, self.config.K + 1):
            loss_k, d, r = self.loss_single(x, k, lambdas[k - 1], noise)
            pairs.append((d, r))
            total = loss_k if total is None else total + loss_k
        return total, pairs

    # -- deployment-path helpers ----------------------------------------
    def reconstruct(self, q, k: int, orig_h: int, orig_w: int) -> np.ndarray:
        """Decode integer symbols to a clipped [0, 1] image array."""
        xhat = self.decode_latent(np.asarray(q, dtype=np.float64), k).value
        return np.clip(xhat[:, :, :orig_h, :orig_w], 0.0, 1.0)

    def sliced(self, k: int) -> "SlimAutoencoder":
        """Standalone single-width model built from the level-k parameter
        slices; its forward pass is bitwise equal to this model at k."""
        if not 1 <= k <= self.config.K:
            raise ConfigError(f"level {k} out of range 1..{self.config.K}")
        cfg = CodecConfig(
            widths=(self.config.widths[k - 1],),
            input_channels=self.config.input_channels,
            enc_kernels=self.config.enc_kernels,
            enc_strides=self.config.enc_strides,
            gdn_variant=self.config.gdn_variant,
            support=self.config.support,
            bins_per_unit=self.config.bins_per_unit,
        )
        out = SlimAutoencoder(cfg, seed=0)
        for (conv, gdn), (dconv, dgdn) in zip(self.enc, out.enc):
            conv.copy_slice_into(dconv, k)
            gdn.copy_slice_into(dgdn, k)
        for (igdn, deconv), (digdn, ddeconv) in zip(self.dec, out.dec):
            igdn.copy_slice_into(digdn, k)
            deconv.copy_slice_into(ddeconv, k)
        self.entropy.copy_slice_into(out.entropy, k)
        return out
