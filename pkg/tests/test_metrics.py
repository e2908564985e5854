import csv
import json

import numpy as np
import pytest

from scae.errors import ConfigError
from scae.metrics import (
    bd_rate,
    cost_report,
    flops_count,
    gdn_storage_bytes,
    independent_models_bytes,
    memory_footprint,
    model_bytes_total,
    param_count_active,
    param_count_total,
    rd_sweep,
    write_csv,
    write_json,
)
from scae.model import CodecConfig, desk_config, full_config

MIB = 2.0**20


def test_one_by_one_conv_is_two_flops():
    # a 1x1 conv, 1 channel in and out, on a 1x1 input costs exactly 2
    # FLOPs (one multiply-accumulate); the normalization pair adds 3 + 4
    # per direction
    cfg = CodecConfig(widths=(1,), input_channels=1, enc_kernels=(1,),
                      enc_strides=(1,))
    assert flops_count(cfg, 1, 1, 1) == 2 + 7 + 7 + 2


def test_flops_double_with_area():
    cfg = full_config()
    a = flops_count(cfg, 3, 768, 512)
    b = flops_count(cfg, 3, 768, 1024)
    assert b == 2 * a


def test_flops_monotone_in_level():
    cfg = full_config()
    counts = [flops_count(cfg, k, 768, 512) for k in range(1, 6)]
    assert all(x < y for x, y in zip(counts, counts[1:]))


def test_flops_cross_width_ratios_match_reference():
    """Cross-width ratios against the published cost table, 10% tolerance."""
    cfg = full_config()
    published = {48: 15.34, 72: 31.69, 96: 53.81, 144: 115.53, 192: 200.28}
    mine = {w: flops_count(cfg, k, 768, 512)
            for k, w in enumerate(cfg.widths, 1)}
    for w in (48, 72, 96, 144):
        ratio = mine[w] / mine[192]
        ref = published[w] / published[192]
        assert abs(ratio / ref - 1) <= 0.10, (w, ratio, ref)


def test_memory_reference_totals():
    cfg = full_config()
    assert model_bytes_total(cfg) / MIB == pytest.approx(15.3, rel=0.10)
    assert independent_models_bytes(cfg) / MIB == pytest.approx(31.1, rel=0.10)
    assert gdn_storage_bytes(cfg, "switch") / MIB == pytest.approx(1.71, rel=0.10)
    assert gdn_storage_bytes(cfg, "slim") / MIB == pytest.approx(0.85, rel=0.10)


def test_param_counts_match_model(desk_model):
    cfg = desk_model.config
    stored = sum(p.value.size for p in desk_model.params())
    assert param_count_total(cfg) == stored
    for k in (1, 2, 3):
        sliced = desk_model.sliced(k)
        active = sum(p.value.size for p in sliced.params())
        assert param_count_active(cfg, k) == active


def test_memory_monotone_in_level():
    cfg = full_config()
    rows = [memory_footprint(cfg, k, 768, 512) for k in range(1, 6)]
    for (pa, fa), (pb, fb) in zip(rows, rows[1:]):
        assert pa < pb and fa < fb


def test_bd_rate_identity_zero():
    curve = [(0.2, 30.0), (0.4, 33.0), (0.8, 36.0), (1.6, 39.0)]
    assert bd_rate(curve, curve) == pytest.approx(0.0, abs=1e-12)


def test_bd_rate_constant_shift():
    curve = [(0.2, 30.0), (0.4, 33.0), (0.8, 36.0), (1.6, 39.0)]
    shifted = [(0.9 * r, q) for r, q in curve]
    assert bd_rate(shifted, curve) == pytest.approx(-10.0, abs=0.1)


def test_bd_rate_antisymmetry():
    rng = np.random.default_rng(5)
    a = [(r, 28 + 4 * np.log2(r / 0.1)) for r in (0.15, 0.3, 0.6, 1.2, 2.0)]
    b = [(r * 0.8, q + rng.uniform(-0.1, 0.1)) for r, q in a]
    ab = bd_rate(a, b)
    ba = bd_rate(b, a)
    assert ba == pytest.approx(-ab / (1 + ab / 100), rel=0.05)


def test_bd_rate_requires_points_and_overlap():
    short = [(0.2, 30.0), (0.4, 33.0), (0.8, 36.0)]
    good = short + [(1.6, 39.0)]
    with pytest.raises(ConfigError):
        bd_rate(short, good)
    disjoint = [(0.2, 10.0), (0.4, 12.0), (0.8, 14.0), (1.6, 16.0)]
    with pytest.raises(ConfigError):
        bd_rate(good, disjoint)


def test_rd_sweep_rows_and_consistency(trained_tiny, val_images):
    rows = rd_sweep(trained_tiny, val_images)
    assert len(rows) == trained_tiny.config.K
    pixels = val_images[0].shape[2] * val_images[0].shape[3]
    for r in rows:
        # actual payload carries the coder flush (up to 64 bits per image)
        # on top of the model-entropy estimate
        assert r["actual_bpp"] >= 0.98 * r["est_bpp"]
        assert r["actual_bpp"] <= 1.05 * r["est_bpp"] + 64.0 / pixels
        assert r["enc_ms"] == 0.0 and r["dec_ms"] == 0.0
        assert r["lambda"] == trained_tiny.lambdas[r["level"] - 1]


def test_rd_sweep_csv_json_roundtrip(tmp_path, trained_tiny, val_images):
    rows = rd_sweep(trained_tiny, val_images)
    write_csv(tmp_path / "r.csv", rows)
    write_json(tmp_path / "r.json", rows)
    with open(tmp_path / "r.csv", newline="") as f:
        parsed = list(csv.DictReader(f))
    assert len(parsed) == len(rows)
    for got, want in zip(parsed, rows):
        for key, val in want.items():
            if isinstance(val, float):
                assert float(got[key]) == pytest.approx(val, rel=1e-9)
            else:
                assert type(val)(got[key]) == val
    with open(tmp_path / "r.json") as f:
        jrows = json.load(f)
    for got, want in zip(jrows, rows):
        assert got == {k: want[k] for k in got}


def test_cost_report_pure(tmp_path):
    rows = cost_report(desk_config(), 48, 48)
    assert [r["width"] for r in rows] == [4, 8, 16]
    assert rows[0]["param_bytes_total"] == model_bytes_total(desk_config())
