"""32-bit renormalizing range coder with carry handling.

Byte-aligned output, 16-bit (or lower) probability precision.  The encoder
keeps ``low`` in a 40-bit accumulator; a pending cache byte plus a run of
0xFF bytes absorb carries.  The decoder mirrors the arithmetic exactly, so
encode/decode is bit-exact across processes and machines.

Overhead is the one leading cache byte plus a 5-byte flush (48 bits total)
and under 0.6% of a bit per symbol from integer division, comfortably
inside the "ideal + 2% + 64 bits" budget for long streams.

Symbols are coded against integer cumulative tables ``cum`` of length
S + 1 with ``cum[0] == 0`` and ``cum[S] == total``; every symbol must have
positive mass.
"""

from __future__ import annotations

from .errors import DecodeError, ConfigError

_TOP = 1 << 24
_MASK32 = (1 << 32) - 1


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            self.out.append((self.cache + carry) & 0xFF)
            for _ in range(self.cache_size - 1):
                self.out.append((0xFF + carry) & 0xFF)
            self.cache = (self.low >> 24) & 0xFF
            self.cache_size = 0
        self.cache_size += 1
        self.low = (self.low << 8) & _MASK32

    def encode(self, cum_lo: int, cum_hi: int, total: int):
        if cum_hi <= cum_lo:
            raise ConfigError("symbol has zero mass in its coding table")
        r = self.range // total
        self.low += r * cum_lo
        self.range = r * (cum_hi - cum_lo)
        while self.range < _TOP:
            self.range = (self.range << 8) & _MASK32
            self._shift_low()

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        self._next_byte()  # the encoder's initial zero cache byte
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()
        self._r = 0

    def _next_byte(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("range-coded stream truncated")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode_target(self, total: int) -> int:
        self._r = self.range // total
        t = self.code // self._r
        return total - 1 if t >= total else t

    def advance(self, cum_lo: int, cum_hi: int):
        self.code -= cum_lo * self._r
        self.range = self._r * (cum_hi - cum_lo)
        while self.range < _TOP:
            self.range = (self.range << 8) & _MASK32
            self.code = ((self.code << 8) | self._next_byte()) & ((1 << 40) - 1)


def _bisect_cum(cum, target: int) -> int:
    lo, hi = 0, len(cum) - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if cum[mid] <= target:
            lo = mid
        else:
            hi = mid
    return lo


def encode_symbols(symbols, table_ids, tables, precision_bits: int = 16) -> bytes:
    """Range-encode ``symbols`` (already offset to table indices >= 0).

    table_ids[i] selects the cumulative table for symbols[i]; tables are
    integer cumulative arrays with total mass 2**precision_bits.
    """
    total = 1 << precision_bits
    enc = RangeEncoder()
    cums = [list(int(v) for v in t) for t in tables]
    for s, ti in zip(symbols, table_ids):
        cum = cums[ti]
        enc.encode(cum[s], cum[s + 1], total)
    return enc.finish()


def decode_symbols(data: bytes, n_symbols: int, table_ids, tables,
                   precision_bits: int = 16):
    """Inverse of :func:`encode_symbols`; returns a list of table indices."""
    total = 1 << precision_bits
    dec = RangeDecoder(data)
    cums = [list(int(v) for v in t) for t in tables]
    out = []
    for i in range(n_symbols):
        cum = cums[table_ids[i]]
        target = dec.decode_target(total)
        s = _bisect_cum(cum, target)
        dec.advance(cum[s], cum[s + 1])
        out.append(s)
    return out
