"""Image ingestion, deterministic sampling, and synthetic datasets.

PPM (binary P6, 8-bit) support is implemented directly so tests never need
an image library; PNG goes through Pillow.  All loaded images are float64
(1, 3, h, w) scaled to [0, 1].

Every sampling decision is a pure function of (seed, step), so training
pipelines are reproducible end to end and resumable mid-run.
"""

from __future__ import annotations

import hashlib
import warnings
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

SYNTHETIC_KINDS = ("gaussian_blobs", "gradients", "band_limited_noise")


def _rng(seed: int, domain: int, step: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(domain), int(step)))
    return np.random.Generator(np.random.PCG64(ss))


_DOMAIN_BATCH = 1
_DOMAIN_IMAGE = 2


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG or binary PPM as (1, 3, h, w) in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pnm"):
        arr = _read_ppm(path)
    elif suffix == ".png":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode != "RGB":
                raise DataError(
                    f"{path}: only 8-bit RGB PNG is supported, got mode {im.mode}"
                )
            arr = np.asarray(im, dtype=np.uint8)
    else:
        raise DataError(f"{path}: unsupported image format {suffix!r}")
    x = arr.astype(np.float64) / 255.0
    return x.transpose(2, 0, 1)[None]


def save_image(path, x: np.ndarray):
    """Write (1, 3, h, w) [0, 1] values as PPM or PNG by extension."""
    path = Path(path)
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[0] != 1 or x.shape[1] != 3:
        raise ConfigError(f"save_image expects (1, 3, h, w), got {x.shape}")
    u8 = np.clip(np.round(x[0] * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pnm"):
        with open(path, "wb") as f:
            f.write(b"P6\n%d %d\n255\n" % (u8.shape[1], u8.shape[0]))
            f.write(np.ascontiguousarray(u8).tobytes())
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(u8, mode="RGB").save(path)
    else:
        raise DataError(f"{path}: unsupported output format {suffix!r}")


def _read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(data):
            raise DataError(f"{path}: truncated PPM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError as e:
        raise DataError(f"{path}: bad PPM header: {e}") from e
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
    pos += 1  # single whitespace after maxval
    need = w * h * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise DataError(f"{path}: PPM pixel data truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)


class Dataset:
    """In-memory image collection with deterministic crop/batch sampling."""

    def __init__(self, images, crop_size: int, batch_size: int = 8, seed: int = 0):
        usable = []
        for i, img in enumerate(images):
            img = np.asarray(img, dtype=np.float64)
            if img.ndim != 3 or img.shape[0] != 3:
                raise ConfigError(f"dataset image {i} must be (3, h, w), got {img.shape}")
            if img.shape[1] < crop_size or img.shape[2] < crop_size:
                warnings.warn(
                    f"image {i} ({img.shape[1]}x{img.shape[2]}) smaller than "
                    f"crop {crop_size}; skipped"
                )
                continue
            usable.append(img)
        if not usable:
            raise DataError("dataset has no image at least as large as the crop size")
        self.images = usable
        self.crop_size = int(crop_size)
        self.batch_size = int(batch_size)
        self.seed = int(seed)

    def __len__(self):
        return len(self.images)

    def sample_batch(self, step: int) -> np.ndarray:
        """Deterministic batch of random crops for one training step."""
        rng = _rng(self.seed, _DOMAIN_BATCH, step)
        c = self.crop_size
        out = np.empty((self.batch_size, 3, c, c))
        for b in range(self.batch_size):
            img = self.images[int(rng.integers(0, len(self.images)))]
            oy = int(rng.integers(0, img.shape[1] - c + 1))
            ox = int(rng.integers(0, img.shape[2] - c + 1))
            out[b] = img[:, oy : oy + c, ox : ox + c]
        return out

    def full_images(self):
        """Each image as a (1, 3, h, w) batch, for validation/eval."""
        return [img[None] for img in self.images]


def from_paths(paths, crop_size: int, batch_size: int = 8, seed: int = 0) -> Dataset:
    images = [load_image(p)[0] for p in paths]
    return Dataset(images, crop_size, batch_size, seed)


def split_paths(paths, val_fraction: float = 0.1, split_seed: int = 0):
    """Deterministic train/val split keyed by a hash of each path."""
    train, val = [], []
    for p in paths:
        digest = hashlib.sha256(f"{split_seed}:{Path(p).name}".encode()).digest()
        frac = int.from_bytes(digest[:8], "little") / 2**64
        (val if frac < val_fraction else train).append(p)
    return train, val


def _normalize01(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo + 1e-9)


def _gaussian_blobs(size: int, rng) -> np.ndarray:
    # blob scales are log-uniform from sub-pixel dots to image-scale washes
    # so images mix coarse structure with fine detail
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    n_blobs = max(6, int(round(size * size / 32)))
    img = np.zeros((3, size, size))
    base = rng.uniform(-0.3, 0.3, size=3)
    img += base[:, None, None]
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, size, size=2)
        sigma = np.exp(rng.uniform(np.log(0.8), np.log(5.0)))
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma * sigma))
        amp = rng.uniform(-1.0, 1.0, size=3)
        img += amp[:, None, None] * blob[None]
    return _normalize01(img)


def _gradients(size: int, rng) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    img = np.empty((3, size, size))
    for c in range(3):
        a, gy, gx = rng.uniform(-1, 1, size=3)
        img[c] = a + gy * yy + gx * xx
    return _normalize01(img)


def _band_limited_noise(size: int, rng, cutoff: float) -> np.ndarray:
    white = rng.normal(size=(3, size, size))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    mask = np.sqrt(fy * fy + fx * fx) <= cutoff * 0.5
    img = np.empty((3, size, size))
    for c in range(3):
        spec = np.fft.rfft2(white[c]) * mask
        img[c] = np.fft.irfft2(spec, s=(size, size))
    return _normalize01(img)


def make_synthetic(kind: str, n: int, size: int, seed: int, cutoff: float = 0.5,
                   crop_size: int | None = None, batch_size: int = 8) -> Dataset:
    """Generate n reproducible synthetic images of the given kind.

    ``gaussian_blobs`` and ``gradients`` are low-frequency content;
    ``band_limited_noise`` has spectral support up to ``cutoff`` (fraction
    of Nyquist), so raising the cutoff makes images strictly harder to
    compress.
    """
    if kind == "constant":
        images = [np.full((3, size, size), 0.5) for _ in range(n)]
        return Dataset(images, crop_size or size, batch_size, seed)
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}, expected {SYNTHETIC_KINDS}")
    images = []
    for i in range(n):
        rng = _rng(seed, _DOMAIN_IMAGE, i)
        if kind == "gaussian_blobs":
            images.append(_gaussian_blobs(size, rng))
        elif kind == "gradients":
            images.append(_gradients(size, rng))
        else:
            images.append(_band_limited_noise(size, rng, cutoff))
    return Dataset(images, crop_size or size, batch_size, seed)
