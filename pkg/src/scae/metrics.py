"""Efficiency accounting, BD-rate, and rate-distortion sweeps.

FLOP counting is a pure function of (config, level, input size) and
mirrors what the reference kernels do:

* conv: 2 * c_in * c_out * k^2 per output position (multiply-accumulate
  counted as 2);
* transposed conv: the adjoint has exactly the MAC count of its mirror
  conv, i.e. 2 * c_in * c_out * k^2 per *input* position;
* divisive normalization: 3 per channel pair per position (square,
  multiply, accumulate in the fused inner loop) plus 4 per output element
  for the sqrt and divide (2 each).

Absolute magnitudes depend on these conventions; cross-width ratios are
the meaningful, convention-stable quantity.
"""

from __future__ import annotations

import csv
import json
import time

import numpy as np

from .container import encode_image
from .errors import ConfigError
from .layers import gdn_param_count
from .model import CodecConfig

GDN_PAIR_FLOPS = 3      # square, multiply, accumulate per (i, j) channel pair
GDN_ELEM_FLOPS = 4      # sqrt and divide, 2 FLOPs each
BYTES_PER_VALUE = 4

RD_COLUMNS = ("level", "width", "lambda", "est_bpp", "actual_bpp", "psnr_db",
              "flops", "param_bytes", "feature_bytes", "enc_ms", "dec_ms")


def _padded_dims(config: CodecConfig, h: int, w: int):
    f = config.downsample_factor
    return h + (-h) % f, w + (-w) % f


def _stage_plan(config: CodecConfig, k: int, h: int, w: int):
    """Per-layer (kind, c_in, c_out, kernel, positions) at width level k.

    ``positions`` is the pixel count the op's cost scales with: output
    positions for conv, input positions for deconv, the tensor's own
    positions for normalization.
    """
    if not 1 <= k <= config.K:
        raise ConfigError(f"level {k} out of range 1..{config.K}")
    wk = config.widths[k - 1]
    hp, wp = _padded_dims(config, h, w)
    plan = []
    cin = config.input_channels
    for ks, st in zip(config.enc_kernels, config.enc_strides):
        hp //= st
        wp //= st
        plan.append(("conv", cin, wk, ks, hp * wp))
        plan.append(("gdn", wk, wk, 1, hp * wp))
        cin = wk
    n = len(config.dec_kernels)
    for i, (ks, st) in enumerate(zip(config.dec_kernels, config.dec_strides)):
        cout = wk if i < n - 1 else config.input_channels
        plan.append(("gdn", wk, wk, 1, hp * wp))
        plan.append(("deconv", wk, cout, ks, hp * wp))
        hp *= st
        wp *= st
    return plan


def flops_count(config: CodecConfig, k: int, h: int, w: int) -> int:
    """Analytic FLOPs of one encode+decode pass at width level k."""
    total = 0
    for kind, cin, cout, ks, px in _stage_plan(config, k, h, w):
        if kind in ("conv", "deconv"):
            total += 2 * cin * cout * ks * ks * px
        else:
            total += GDN_PAIR_FLOPS * cin * cout * px + GDN_ELEM_FLOPS * cout * px
    return total


def param_count_active(config: CodecConfig, k: int) -> int:
    """Learnable parameters touched when executing at width level k."""
    wk = config.widths[k - 1]
    gdn_active = gdn_param_count("slim", (wk,))
    if config.gdn_variant == "slim_plus":
        gdn_active += 4
    total = 0
    cin = config.input_channels
    for ks in config.enc_kernels:
        total += wk * cin * ks * ks + wk
        total += gdn_active
        cin = wk
    n = len(config.dec_kernels)
    for i, ks in enumerate(config.dec_kernels):
        cout = wk if i < n - 1 else config.input_channels
        total += gdn_active
        total += wk * cout * ks * ks + cout
    total += wk * 2 * config.support * config.bins_per_unit
    return total


def param_count_total(config: CodecConfig) -> int:
    """All stored parameters across every width level."""
    wmax = config.width_max
    gdn_total = gdn_param_count(config.gdn_variant, config.widths)
    total = 0
    cin = config.input_channels
    for ks in config.enc_kernels:
        total += wmax * cin * ks * ks + wmax
        total += gdn_total
        cin = wmax
    n = len(config.dec_kernels)
    for i, ks in enumerate(config.dec_kernels):
        cout = wmax if i < n - 1 else config.input_channels
        total += gdn_total
        total += wmax * cout * ks * ks + cout
    total += sum(config.widths) * 2 * config.support * config.bins_per_unit
    return total


def memory_footprint(config: CodecConfig, k: int, h: int, w: int):
    """(active parameter bytes, feature bytes) at level k, 4 bytes a value.

    Feature bytes sum every intermediate activation (each layer output,
    encoder and decoder) for one image of the given size.
    """
    feats = sum(cout * px for _, _, cout, _, px in _stage_plan(config, k, h, w))
    return BYTES_PER_VALUE * param_count_active(config, k), BYTES_PER_VALUE * feats


def model_bytes_total(config: CodecConfig) -> int:
    """Stored size of the whole width-switchable model."""
    return BYTES_PER_VALUE * param_count_total(config)


def independent_models_bytes(config: CodecConfig) -> int:
    """Stored size of one fixed-width model per level (the baseline this
    package replaces); each uses plain normalization layers."""
    total = 0
    for wk in config.widths:
        single = CodecConfig(
            widths=(wk,), input_channels=config.input_channels,
            enc_kernels=config.enc_kernels, enc_strides=config.enc_strides,
            gdn_variant="slim", support=config.support,
            bins_per_unit=config.bins_per_unit,
        )
        total += param_count_total(single)
    return BYTES_PER_VALUE * total


def gdn_storage_bytes(config: CodecConfig, variant: str | None = None) -> int:
    """Bytes spent on all normalization layers for a given variant."""
    variant = variant or config.gdn_variant
    layers = len(config.enc_kernels) + len(config.dec_kernels)
    return BYTES_PER_VALUE * layers * gdn_param_count(variant, config.widths)


def bd_rate(curve_a, curve_b) -> float:
    """Bjontegaard delta-rate of curve_a relative to curve_b, in percent.

    Curves are sequences of (rate, quality-dB) with at least 4 points and
    overlapping quality ranges; negative means curve_a spends less rate at
    equal quality.
    """
    def prep(curve, label):
        pts = sorted((float(q), float(r)) for r, q in curve)
        if len(pts) < 4:
            raise ConfigError(f"curve {label} needs at least 4 points for BD-rate")
        q = np.array([p[0] for p in pts])
        r = np.array([p[1] for p in pts])
        if np.any(r <= 0):
            raise ConfigError(f"curve {label} has non-positive rates")
        return q, np.log(r)

    qa, la = prep(curve_a, "a")
    qb, lb = prep(curve_b, "b")
    lo = max(qa.min(), qb.min())
    hi = min(qa.max(), qb.max())
    if hi <= lo:
        raise ConfigError("curves share no quality range; BD-rate undefined")
    pa = np.polyfit(qa, la, 3)
    pb = np.polyfit(qb, lb, 3)
    ia = np.polyval(np.polyint(pa), hi) - np.polyval(np.polyint(pa), lo)
    ib = np.polyval(np.polyint(pb), hi) - np.polyval(np.polyint(pb), lo)
    avg = (ia - ib) / (hi - lo)
    return float((np.exp(avg) - 1.0) * 100.0)


def median_ms(fn, warmup: int = 3, runs: int = 20) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times))


def rd_sweep(model, images, precision_bits: int = 16, timing: bool = False):
    """Per-level evaluation rows over a set of (1, 3, h, w) images.

    est_bpp is the likelihood-model estimate, actual_bpp the mean coded
    payload size.  Timing is opt-in because wall-clock numbers are not
    reproducible; without it the ms columns are zero.
    """
    from .container import decode_image
    from .train import validate_rd

    points = validate_rd(model, images)
    lambdas = model.lambdas or [0.0] * model.config.K
    h, w = images[0].shape[2], images[0].shape[3]
    rows = []
    for point in points:
        k = point.level
        actual = []
        streams = []
        for x in images:
            stream, info = encode_image(model, x, k, precision_bits=precision_bits)
            actual.append(info["bpp"])
            streams.append(stream)
        enc_ms = dec_ms = 0.0
        if timing:
            enc_ms = median_ms(lambda: encode_image(model, images[0], k,
                                                    precision_bits=precision_bits))
            dec_ms = median_ms(lambda: decode_image(model, streams[0],
                                                    precision_bits=precision_bits))
        pbytes, fbytes = memory_footprint(model.config, k, h, w)
        rows.append({
            "level": k,
            "width": point.width,
            "lambda": lambdas[k - 1],
            "est_bpp": point.rate,
            "actual_bpp": float(np.mean(actual)),
            "psnr_db": point.psnr,
            "flops": flops_count(model.config, k, h, w),
            "param_bytes": pbytes,
            "feature_bytes": fbytes,
            "enc_ms": enc_ms,
            "dec_ms": dec_ms,
        })
    return rows


def cost_report(config: CodecConfig, h: int, w: int):
    """Pure accounting rows per level (no checkpoint needed)."""
    rows = []
    for k in range(1, config.K + 1):
        pbytes, fbytes = memory_footprint(config, k, h, w)
        rows.append({
            "level": k,
            "width": config.widths[k - 1],
            "flops": flops_count(config, k, h, w),
            "param_bytes": pbytes,
            "param_bytes_total": model_bytes_total(config),
            "feature_bytes": fbytes,
        })
    return rows


def write_csv(path, rows, columns=None):
    if not rows:
        raise ConfigError("no rows to write")
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def write_json(path, rows):
    with open(path, "w") as f:
        json.dump(rows, f, indent=2, sort_keys=True)
        f.write("\n")
