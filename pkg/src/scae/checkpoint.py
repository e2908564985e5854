"""Deterministic binary serialization for models and training state.

A checkpoint stores the model config (as round-trippable INI text), the
final tradeoff vector when trained, and every parameter by name as raw
little-endian float64.  Writing the same model twice produces identical
bytes, and ``load(save(m))`` round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError
from .model import CodecConfig, SlimAutoencoder

_MAGIC = b"SCK1"
_STATE_MAGIC = b"SCT1"
_VERSION = 1


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode()
    arr = np.asarray(arr, dtype=np.float64)
    head = struct.pack("<H", len(nb)) + nb
    head += struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    return head + arr.astype("<f8").tobytes(order="C")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError("checkpoint truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self):
        (nlen,) = self.unpack("<H")
        name = self.take(nlen).decode()
        (ndim,) = self.unpack("<B")
        shape = self.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(self.take(count * 8), dtype="<f8").reshape(shape).copy()
        return name, arr


def save_model(model: SlimAutoencoder, path):
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<B", _VERSION)
    cfg = model.config.config_text().encode()
    out += struct.pack("<I", len(cfg)) + cfg
    if model.lambdas is None:
        out += struct.pack("<B", 0)
    else:
        lams = [float(v) for v in model.lambdas]
        out += struct.pack("<B", 1) + struct.pack("<I", len(lams))
        out += struct.pack(f"<{len(lams)}d", *lams)
    params = model.params()
    out += struct.pack("<I", len(params))
    for p in params:
        out += _pack_array(p.name, p.value)
    with open(path, "wb") as f:
        f.write(bytes(out))


def load_model(path) -> SlimAutoencoder:
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    if r.take(4) != _MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    (version,) = r.unpack("<B")
    if version != _VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (clen,) = r.unpack("<I")
    config = CodecConfig.from_text(r.take(clen).decode())
    model = SlimAutoencoder(config, seed=0)
    (has_lams,) = r.unpack("<B")
    if has_lams:
        (k,) = r.unpack("<I")
        model.lambdas = list(r.unpack(f"<{k}d"))
    (n,) = r.unpack("<I")
    by_name = {p.name: p for p in model.params()}
    if n != len(by_name):
        raise DataError(
            f"{path}: has {n} parameters, config implies {len(by_name)}"
        )
    for _ in range(n):
        name, arr = r.array()
        if name not in by_name:
            raise DataError(f"{path}: unknown parameter {name!r}")
        p = by_name[name]
        if p.value.shape != arr.shape:
            raise DataError(
                f"{path}: parameter {name!r} has shape {arr.shape}, "
                f"expected {p.value.shape}"
            )
        p.value[...] = arr
    return model


def save_state(path, scalars: dict, arrays: dict):
    """Serialize resumable training state: JSON scalars + named arrays."""
    out = bytearray()
    out += _STATE_MAGIC
    blob = json.dumps(scalars, sort_keys=True).encode()
    out += struct.pack("<I", len(blob)) + blob
    out += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        out += _pack_array(name, arrays[name])
    with open(path, "wb") as f:
        f.write(bytes(out))


def load_state(path):
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    if r.take(4) != _STATE_MAGIC:
        raise DataError(f"{path}: not a training-state file")
    (jlen,) = r.unpack("<I")
    scalars = json.loads(r.take(jlen).decode())
    (n,) = r.unpack("<I")
    arrays = {}
    for _ in range(n):
        name, arr = r.array()
        arrays[name] = arr
    return scalars, arrays
