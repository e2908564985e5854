"""Bit-exact bitstream container: header plus range-coded payload(s).

Layout (little-endian):

    0   4s   magic "SCAE"
    4   u8   version
    5   8s   model config hash (first 8 bytes of sha256 over config text)
    13  u8   width level k (1-based)
    14  u32  original image height
    18  u32  original image width
    22  u8   pad_h (rows of zero padding added before encoding)
    23  u8   pad_w
    24  u8   flags: bit 0 = scalable
    [scalable only] u8 group count G, then G x u32 payload byte lengths
    u32  crc32 over every preceding header byte and the payload
    ...  payload bytes (scalable: G independently decodable groups)

Latents are serialized channel-major, raster order within each channel,
so the channel groups of a scalable stream align with payload boundaries.
Scalable group g is coded with the level-g probability tables restricted
to that group's channels and with a fresh coder state, so any prefix of
groups decodes on its own.  Reported bpp is payload bits over original
pixel count; header bytes are excluded.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .entropy import quantize
from .errors import ClampWarning, ConfigError, DataError, DecodeError
from .model import SlimAutoencoder, pad_to_factor
from .rangecoder import decode_symbols, encode_symbols

MAGIC = b"SCAE"
VERSION = 1
FLAG_SCALABLE = 0x01
FILE_EXTENSION = ".scae"


@dataclass
class BitstreamHeader:
    config_hash: bytes
    level: int
    orig_h: int
    orig_w: int
    pad_h: int
    pad_w: int
    scalable: bool
    group_lengths: tuple = ()

    def serialize(self) -> bytes:
        if len(self.config_hash) != 8:
            raise ConfigError("config hash must be 8 bytes")
        out = bytearray()
        out += MAGIC
        out += struct.pack("<B", VERSION)
        out += self.config_hash
        out += struct.pack("<B", self.level)
        out += struct.pack("<II", self.orig_h, self.orig_w)
        out += struct.pack("<BB", self.pad_h, self.pad_w)
        out += struct.pack("<B", FLAG_SCALABLE if self.scalable else 0)
        if self.scalable:
            out += struct.pack("<B", len(self.group_lengths))
            out += struct.pack(f"<{len(self.group_lengths)}I", *self.group_lengths)
        return bytes(out)


def parse_header(data: bytes):
    """Parse a header; returns (header, offset_of_checksum_field)."""
    if len(data) < 25:
        raise DecodeError("bitstream shorter than the fixed header")
    if data[:4] != MAGIC:
        raise DecodeError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = data[4]
    if version != VERSION:
        raise DecodeError(f"unsupported bitstream version {version}")
    config_hash = data[5:13]
    level = data[13]
    orig_h, orig_w = struct.unpack_from("<II", data, 14)
    pad_h, pad_w = struct.unpack_from("<BB", data, 22)
    flags = data[24]
    pos = 25
    scalable = bool(flags & FLAG_SCALABLE)
    group_lengths = ()
    if scalable:
        if len(data) < pos + 1:
            raise DecodeError("bitstream truncated in group table")
        g = data[pos]
        pos += 1
        if len(data) < pos + 4 * g:
            raise DecodeError("bitstream truncated in group table")
        group_lengths = struct.unpack_from(f"<{g}I", data, pos)
        pos += 4 * g
    header = BitstreamHeader(
        config_hash=config_hash, level=level, orig_h=orig_h, orig_w=orig_w,
        pad_h=pad_h, pad_w=pad_w, scalable=scalable, group_lengths=group_lengths,
    )
    return header, pos


def _latent_symbols(model: SlimAutoencoder, x: np.ndarray, k: int):
    """Pad, transform, quantize; returns (symbols (1,C,zh,zw), pads)."""
    xp, pad_h, pad_w = pad_to_factor(x, model.config.downsample_factor)
    z = model.encode_latent(xp, k).value
    q, clamped = quantize(z, model.config.support)
    if q.size and clamped > 0.01 * q.size:
        warnings.warn(
            f"{clamped} of {q.size} latent values fell outside the coded "
            f"support and were clamped",
            ClampWarning,
        )
    return q, pad_h, pad_w


def encode_image(model: SlimAutoencoder, x: np.ndarray, k: int,
                 scalable: bool = False, precision_bits: int = 16):
    """Compress one image (1, c, H, W) in [0, 1] at width level k.

    Returns (bitstream_bytes, info dict).  Scalable mode requires k = K and
    writes one independently coded payload per channel group.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[0] != 1:
        raise ConfigError(f"encode_image expects a (1, c, H, W) image, got {x.shape}")
    K = model.config.K
    if not 1 <= k <= K:
        raise ConfigError(f"width level {k} out of range 1..{K}")
    if scalable and k != K:
        raise ConfigError("scalable mode codes all channel groups; use k = K")
    H, W = x.shape[2], x.shape[3]
    if H >= 1 << 32 or W >= 1 << 32:
        raise DataError("image dimensions exceed the u32 header fields")

    q, pad_h, pad_w = _latent_symbols(model, x, k)
    L = model.config.support
    zh, zw = q.shape[2], q.shape[3]
    per_chan = zh * zw
    widths = model.config.widths

    if not scalable:
        tables = model.entropy.cdf_tables(k, precision_bits)
        syms = (q[0] + L).reshape(-1).tolist()
        ids = np.repeat(np.arange(widths[k - 1]), per_chan).tolist()
        payloads = [encode_symbols(syms, ids, tables, precision_bits)]
        group_lengths = ()
    else:
        payloads = []
        lo = 0
        for g in range(1, K + 1):
            hi = widths[g - 1]
            tables = model.entropy.cdf_tables(g, precision_bits)[lo:hi]
            syms = (q[0, lo:hi] + L).reshape(-1).tolist()
            ids = np.repeat(np.arange(hi - lo), per_chan).tolist()
            payloads.append(encode_symbols(syms, ids, tables, precision_bits))
            lo = hi
        group_lengths = tuple(len(p) for p in payloads)

    header = BitstreamHeader(
        config_hash=model.config.config_hash(), level=k, orig_h=H, orig_w=W,
        pad_h=pad_h, pad_w=pad_w, scalable=scalable, group_lengths=group_lengths,
    )
    head = header.serialize()
    payload = b"".join(payloads)
    checksum = zlib.crc32(head + payload) & 0xFFFFFFFF
    stream = head + struct.pack("<I", checksum) + payload
    payload_bytes = len(payload)
    info = {
        "bpp": 8.0 * payload_bytes / (H * W),
        "payload_bytes": payload_bytes,
        "header_bytes": len(head) + 4,
        "level": k,
        "scalable": scalable,
    }
    return stream, info


def decode_image(model: SlimAutoencoder, data: bytes, levels: int | None = None,
                 precision_bits: int = 16):
    """Decompress a bitstream. Returns (image (1, c, H, W) in [0, 1], info).

    For scalable streams, ``levels`` selects how many channel groups to
    decode (quality-progressive); omit it to use all of them.  For
    non-scalable streams ``levels`` must be absent.
    """
    header, pos = parse_header(data)
    if len(data) < pos + 4:
        raise DecodeError("bitstream truncated before checksum")
    (stored_crc,) = struct.unpack_from("<I", data, pos)
    payload = data[pos + 4 :]
    actual_crc = zlib.crc32(data[:pos] + payload) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise DecodeError(
            f"checksum mismatch: stored {stored_crc:08x}, computed {actual_crc:08x}"
        )

    model_hash = model.config.config_hash()
    if header.config_hash != model_hash:
        raise DecodeError(
            f"model mismatch: bitstream built for config "
            f"{header.config_hash.hex()}, loaded checkpoint is {model_hash.hex()}"
        )
    K = model.config.K
    widths = model.config.widths
    if not 1 <= header.level <= K:
        raise DecodeError(
            f"bitstream width level {header.level} outside this model's 1..{K}"
        )
    if header.scalable:
        if len(header.group_lengths) != K:
            raise DecodeError(
                f"scalable stream carries {len(header.group_lengths)} groups, "
                f"model has {K} width levels"
            )
        if levels is None:
            levels = K
        if not 1 <= levels <= K:
            raise ConfigError(f"levels must be in 1..{K}, got {levels}")
        if sum(header.group_lengths) != len(payload):
            raise DecodeError("group table does not match payload size")
    elif levels is not None:
        raise ConfigError("levels applies only to scalable bitstreams")

    f = model.config.downsample_factor
    ph = header.orig_h + header.pad_h
    pw = header.orig_w + header.pad_w
    if ph % f or pw % f:
        raise DecodeError("padded dimensions in header are not a factor multiple")
    zh, zw = ph // f, pw // f
    per_chan = zh * zw
    L = model.config.support

    if not header.scalable:
        k = header.level
        C = widths[k - 1]
        tables = model.entropy.cdf_tables(k, precision_bits)
        ids = np.repeat(np.arange(C), per_chan).tolist()
        syms = decode_symbols(payload, C * per_chan, ids, tables, precision_bits)
        q = np.asarray(syms, dtype=np.int64).reshape(1, C, zh, zw) - L
        out_level = k
    else:
        out_level = levels
        C = widths[levels - 1]
        q = np.zeros((1, C, zh, zw), dtype=np.int64)
        offset = 0
        lo = 0
        for g in range(1, levels + 1):
            hi = widths[g - 1]
            glen = header.group_lengths[g - 1]
            chunk = payload[offset : offset + glen]
            tables = model.entropy.cdf_tables(g, precision_bits)[lo:hi]
            ids = np.repeat(np.arange(hi - lo), per_chan).tolist()
            syms = decode_symbols(chunk, (hi - lo) * per_chan, ids, tables,
                                  precision_bits)
            q[0, lo:hi] = np.asarray(syms, dtype=np.int64).reshape(hi - lo, zh, zw) - L
            offset += glen
            lo = hi

    xhat = model.reconstruct(q, out_level, header.orig_h, header.orig_w)
    info = {"level": out_level, "scalable": header.scalable,
            "bpp": 8.0 * len(payload) / (header.orig_h * header.orig_w)}
    return xhat, info
