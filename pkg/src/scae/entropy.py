"""Per-width factorized entropy model.

Each width level owns an independent set of per-channel probability
tables: ``M = 2*L*B`` learnable cell logits per channel, mapped through a
softmax to cell masses.  The cells tile ``[-L-1/2, L-1/2)`` so that every
integer symbol ``q`` in the coded alphabet ``[-L, L-1]`` owns exactly
``B`` cells, and a flat model assigns every symbol the same probability.

The continuous CDF ``F`` is the piecewise-linear interpolant of the
cumulative cell masses; the likelihood of a value ``v`` is
``F(v + 1/2) - F(v - 1/2)``, which for integer ``v`` is exactly the cell
mass of the symbol.  Likelihoods are floored at ``P_MIN = 2**-16`` (one
count at 16-bit coder precision) so no coded symbol ever has zero mass.
"""

from __future__ import annotations

import numpy as np

from .autograd import Node, Param, as_node
from .errors import ConfigError

P_MIN = 2.0 ** -16
LOG2E = 1.0 / np.log(2.0)


def add_uniform_noise(z, rng):
    """Quantization proxy for training: z + u with u ~ U(-1/2, 1/2)."""
    z = np.asarray(z, dtype=np.float64)
    noise = rng.random(z.shape) - 0.5
    noise[noise == -0.5] = 0.0
    return z + noise


def quantize(z, support: int):
    """Round to nearest integer, ties away from zero, clamp to [-L, L-1].

    Returns (symbols, clamp_count).  Callers should surface a warning when
    the clamp rate exceeds 1% of the symbols.
    """
    z = np.asarray(z, dtype=np.float64)
    q = np.copysign(np.floor(np.abs(z) + 0.5), z)
    clamped = np.clip(q, -support, support - 1)
    count = int(np.count_nonzero(clamped != q))
    return clamped.astype(np.int64), count


def _softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def piecewise_likelihood(logits, values, support: int, bins_per_unit: int,
                         floor: float = P_MIN) -> Node:
    """Differentiable likelihood under the piecewise-linear CDF.

    logits: Node (C, M) with M = 2*support*bins_per_unit.
    values: Node or array (n, C, h, w); channel c uses logits row c.
    Returns a Node of per-element probabilities, floored at ``floor``.
    Gradients flow to both the logits and the values.
    """
    logits = as_node(logits)
    values = as_node(values)
    C, M = logits.value.shape
    if values.value.ndim != 4 or values.value.shape[1] != C:
        raise ConfigError(
            f"likelihood expects values with {C} channels, got shape {values.value.shape}"
        )
    L, B = support, bins_per_unit
    if M != 2 * L * B:
        raise ConfigError(f"logits have {M} cells, expected {2 * L * B}")
    lo_edge = -(L + 0.5)

    w = _softmax(logits.value)
    cum = np.concatenate([np.zeros((C, 1)), np.cumsum(w, axis=1)], axis=1)

    v = values.value
    chan = np.broadcast_to(np.arange(C)[None, :, None, None], v.shape)

    def locate(t):
        t = np.clip((t - lo_edge) * B, 0.0, float(M))
        j = np.minimum(np.floor(t), M - 1).astype(np.int64)
        return t, j, t - j

    t_lo, j_lo, f_lo = locate(v - 0.5)
    t_hi, j_hi, f_hi = locate(v + 0.5)
    F_lo = cum[chan, j_lo] + w[chan, j_lo] * f_lo
    F_hi = cum[chan, j_hi] + w[chan, j_hi] * f_hi
    p_raw = F_hi - F_lo
    p = np.maximum(p_raw, floor)
    out = Node(p, (logits, values))

    inside_lo = (t_lo > 0.0) & (t_lo < M)
    inside_hi = (t_hi > 0.0) & (t_hi < M)

    def back(g):
        ge = np.where(p_raw > floor, g, 0.0)
        dv = ge * (
            np.where(inside_hi, w[chan, j_hi], 0.0)
            - np.where(inside_lo, w[chan, j_lo], 0.0)
        ) * B
        values.accumulate(dv)

        cf = chan.reshape(-1)
        gf = ge.reshape(-1)
        # prefix part of dF/dw via a difference array, point parts direct
        diff = np.zeros((C, M + 1))
        np.add.at(diff, (cf, j_lo.reshape(-1)), gf)
        np.add.at(diff, (cf, j_hi.reshape(-1)), -gf)
        dw = np.cumsum(diff, axis=1)[:, :M]
        np.add.at(dw, (cf, j_hi.reshape(-1)), gf * f_hi.reshape(-1))
        np.add.at(dw, (cf, j_lo.reshape(-1)), -gf * f_lo.reshape(-1))
        inner = (w * dw).sum(axis=1, keepdims=True)
        logits.accumulate(w * (dw - inner))

    out._backward = back
    return out


class FactorizedEntropyModel:
    """Switchable per-width, per-channel probability model.

    Levels share no parameters: training one level leaves every other
    level's tables bitwise unchanged.
    """

    def __init__(self, widths, support: int = 32, bins_per_unit: int = 1,
                 name: str = "entropy"):
        if support < 1 or bins_per_unit < 1:
            raise ConfigError("support and bins_per_unit must be positive")
        self.widths = tuple(widths)
        self.support = int(support)
        self.bins_per_unit = int(bins_per_unit)
        self.cells = 2 * self.support * self.bins_per_unit
        self.logits = [
            Param(np.zeros((w, self.cells)), f"{name}.level{k + 1}.logits",
                  group="entropy")
            for k, w in enumerate(self.widths)
        ]

    @property
    def K(self) -> int:
        return len(self.widths)

    def params(self):
        return list(self.logits)

    def _level(self, k: int) -> Param:
        if not 1 <= k <= self.K:
            raise ConfigError(f"entropy level {k} out of range 1..{self.K}")
        return self.logits[k - 1]

    def pmf(self, k: int) -> np.ndarray:
        """Raw per-symbol masses (channels, 2L); rows sum to 1 exactly."""
        w = _softmax(self._level(k).value)
        C = w.shape[0]
        return w.reshape(C, 2 * self.support, self.bins_per_unit).sum(axis=2)

    def likelihood(self, values, k: int, channels=None, floor: float = P_MIN) -> Node:
        """Per-element probability of ``values`` under level ``k``.

        ``channels`` optionally restricts to a contiguous channel range
        (lo, hi), as used when coding one channel group of a scalable
        stream.  Out-of-support values clamp to the edge cells; use
        :func:`count_out_of_support` for diagnostics.
        """
        logits = self._level(k)
        if channels is not None:
            lo, hi = channels
            logits = logits[lo:hi]
        return piecewise_likelihood(
            logits, values, self.support, self.bins_per_unit, floor=floor
        )

    def rate_bits(self, values, k: int, floor: float = P_MIN) -> Node:
        """Total code length estimate in bits: -sum log2 p(values)."""
        from .autograd import log, sum_

        p = self.likelihood(values, k, floor=floor)
        return sum_(log(p)) * (-LOG2E)

    def count_out_of_support(self, values) -> int:
        v = np.asarray(values)
        return int(np.count_nonzero((v < -self.support) | (v > self.support - 1)))

    def cdf_tables(self, k: int, precision_bits: int = 16):
        """Integer cumulative tables for the range coder.

        Per channel: strictly increasing counts of length 2L+1 starting at
        0 and ending exactly at 2**precision_bits; every symbol has mass
        at least 1.  A pure function of the level parameters.
        """
        if not 12 <= precision_bits <= 16:
            raise ConfigError(f"precision_bits must be in [12, 16], got {precision_bits}")
        total = 1 << precision_bits
        S = 2 * self.support
        spare = total - S
        if spare < 0:
            raise ConfigError(
                f"support {self.support} too wide for {precision_bits}-bit tables"
            )
        pmf = self.pmf(k)
        tables = []
        for row in pmf:
            scaled = row * spare
            base = np.floor(scaled).astype(np.int64)
            leftover = spare - int(base.sum())
            if leftover > 0:
                order = np.argsort(-(scaled - base), kind="stable")
                base[order[:leftover]] += 1
            mass = base + 1
            cum = np.zeros(S + 1, dtype=np.int64)
            np.cumsum(mass, out=cum[1:])
            tables.append(cum)
        return tables

    def dump_tables(self, k: int, precision_bits: int = 16) -> bytes:
        """Debug dump: per channel the 2L cumulative counts below each
        symbol, little-endian 16-bit (the final total 2**precision is
        implicit)."""
        out = bytearray()
        for cum in self.cdf_tables(k, precision_bits):
            out += cum[:-1].astype("<u2").tobytes()
        return bytes(out)

    def copy_slice_into(self, dst: "FactorizedEntropyModel", k: int):
        dst.logits[0].value[...] = self._level(k).value
