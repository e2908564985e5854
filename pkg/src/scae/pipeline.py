"""Run orchestration shared by the CLI and the test suite.

A RunConfig fully describes one training run (model, regime, data,
budgets, seed); the run directory it produces always contains the exact
config used, the final checkpoint, the training log, and the final
validation RD points.  Reruns with the same seed overwrite identically.
"""

from __future__ import annotations

import configparser
import csv
import io
from dataclasses import dataclass
from pathlib import Path

from . import data as data_mod
from .checkpoint import save_model
from .errors import ConfigError, DataError
from .model import CodecConfig, SlimAutoencoder
from .train import (
    Adam,
    ScheduleParams,
    estimate_lambdas_from_curves,
    lambda_scheduling,
    sgd_train,
    validate_rd,
    write_log,
    _format_row,
)

REGIMES = ("naive", "estimated", "scheduled")

RD_POINT_COLUMNS = ("level", "width", "lambda", "rate_bpp", "psnr_db", "mse")


@dataclass
class RunConfig:
    model: CodecConfig
    regime: str = "scheduled"
    seed: int = 0
    out_dir: str = "run"
    # schedule / optimization
    lambda_top: float = 0.01
    kappa: float = 1.25
    sched_t: int = 200
    sched_m: int = 7
    lr: float = 1e-3
    lr_entropy: float = 1e-2
    naive_iterations: int = 3000
    total_iterations: int = 8000
    finetune_iterations: int = 2000
    batch_size: int = 8
    crop_size: int = 24
    # data
    synthetic: str = "gaussian_blobs"
    data_dir: str = ""
    image_size: int = 24
    train_images: int = 200
    val_images: int = 10
    cutoff: float = 0.5
    data_seed: int = 1000
    split_seed: int = 0
    val_fraction: float = 0.1
    curves_path: str = ""

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")

    def schedule_params(self) -> ScheduleParams:
        return ScheduleParams(
            lambda_top=self.lambda_top, kappa=self.kappa, T=self.sched_t,
            M=self.sched_m, lr_main=self.lr, lr_entropy=self.lr_entropy,
        )

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.read_string(self.model.config_text())
        cp["train"] = {
            "regime": self.regime,
            "seed": str(self.seed),
            "lambda_top": repr(self.lambda_top),
            "kappa": repr(self.kappa),
            "sched_t": str(self.sched_t),
            "sched_m": str(self.sched_m),
            "lr": repr(self.lr),
            "lr_entropy": repr(self.lr_entropy),
            "naive_iterations": str(self.naive_iterations),
            "total_iterations": str(self.total_iterations),
            "finetune_iterations": str(self.finetune_iterations),
            "batch_size": str(self.batch_size),
            "crop_size": str(self.crop_size),
        }
        cp["data"] = {
            "synthetic": self.synthetic,
            "data_dir": self.data_dir,
            "image_size": str(self.image_size),
            "train_images": str(self.train_images),
            "val_images": str(self.val_images),
            "cutoff": repr(self.cutoff),
            "data_seed": str(self.data_seed),
            "split_seed": str(self.split_seed),
            "val_fraction": repr(self.val_fraction),
            "curves_path": self.curves_path,
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, out_dir: str = "run") -> "RunConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        model = CodecConfig.from_text(text)
        t = cp["train"] if "train" in cp else {}
        d = cp["data"] if "data" in cp else {}

        def get(sec, key, cast, default):
            return cast(sec[key]) if key in sec else default

        return cls(
            model=model,
            regime=get(t, "regime", str, "scheduled"),
            seed=get(t, "seed", int, 0),
            out_dir=out_dir,
            lambda_top=get(t, "lambda_top", float, 0.01),
            kappa=get(t, "kappa", float, 1.25),
            sched_t=get(t, "sched_t", int, 200),
            sched_m=get(t, "sched_m", int, 7),
            lr=get(t, "lr", float, 1e-3),
            lr_entropy=get(t, "lr_entropy", float, 1e-2),
            naive_iterations=get(t, "naive_iterations", int, 3000),
            total_iterations=get(t, "total_iterations", int, 8000),
            finetune_iterations=get(t, "finetune_iterations", int, 2000),
            batch_size=get(t, "batch_size", int, 8),
            crop_size=get(t, "crop_size", int, 24),
            synthetic=get(d, "synthetic", str, "gaussian_blobs"),
            data_dir=get(d, "data_dir", str, ""),
            image_size=get(d, "image_size", int, 24),
            train_images=get(d, "train_images", int, 200),
            val_images=get(d, "val_images", int, 10),
            cutoff=get(d, "cutoff", float, 0.5),
            data_seed=get(d, "data_seed", int, 1000),
            split_seed=get(d, "split_seed", int, 0),
            val_fraction=get(d, "val_fraction", float, 0.1),
            curves_path=get(d, "curves_path", str, ""),
        )


def build_datasets(rc: RunConfig):
    """(train dataset, validation images) from the run config."""
    if rc.data_dir:
        root = Path(rc.data_dir)
        paths = sorted(
            p for p in root.iterdir() if p.suffix.lower() in (".png", ".ppm", ".pnm")
        )
        if not paths:
            raise DataError(f"no .png/.ppm images under {root}")
        train_paths, val_paths = data_mod.split_paths(
            paths, rc.val_fraction, rc.split_seed
        )
        if not train_paths or not val_paths:
            raise DataError("train/val split left one side empty; adjust val_fraction")
        train_ds = data_mod.from_paths(train_paths, rc.crop_size, rc.batch_size,
                                       seed=rc.data_seed)
        val_ds = data_mod.from_paths(val_paths, rc.crop_size, rc.batch_size,
                                     seed=rc.data_seed + 1)
        return train_ds, val_ds.full_images()
    train_ds = data_mod.make_synthetic(
        rc.synthetic, rc.train_images, rc.image_size, seed=rc.data_seed,
        cutoff=rc.cutoff, crop_size=rc.crop_size, batch_size=rc.batch_size,
    )
    val_ds = data_mod.make_synthetic(
        rc.synthetic, rc.val_images, rc.image_size, seed=rc.data_seed + 1,
        cutoff=rc.cutoff,
    )
    return train_ds, val_ds.full_images()


def load_curves_csv(path, widths):
    """Read a sweep CSV into per-width (rate, mse) curves."""
    by_width = {w: [] for w in widths}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            w = int(row["width"])
            if w in by_width:
                by_width[w].append((float(row["rate_bpp"]), float(row["mse"])))
    curves = []
    for w in widths:
        if len(by_width[w]) < 3:
            raise DataError(
                f"sweep file {path} has {len(by_width[w])} points for width {w}; "
                f"need at least 3"
            )
        curves.append(by_width[w])
    return curves


def write_rd_points(path, points, lambdas):
    rows = []
    for p in points:
        rows.append({
            "level": p.level, "width": p.width,
            "lambda": f"{lambdas[p.level - 1]:.10g}" if lambdas else "",
            "rate_bpp": f"{p.rate:.6f}", "psnr_db": f"{p.psnr:.4f}",
            "mse": f"{p.mse:.8e}",
        })
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=RD_POINT_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def run_training(rc: RunConfig) -> dict:
    """Execute one full training run; returns a summary dict."""
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(rc.to_ini())

    train_ds, val_images = build_datasets(rc)
    model = SlimAutoencoder(rc.model, seed=rc.seed)
    opt = Adam(model.params(), rc.lr, rc.lr_entropy)
    K = rc.model.K
    rows = []
    iteration = 0

    if rc.regime == "naive":
        lambdas = [rc.lambda_top] * K
        sgd_train(model, train_ds, lambdas, rc.total_iterations, opt, rc.seed)
        iteration = rc.total_iterations
    elif rc.regime == "estimated":
        if not rc.curves_path:
            raise ConfigError("regime 'estimated' needs curves_path (see the sweep command)")
        curves = load_curves_csv(rc.curves_path, rc.model.widths)
        lambdas = estimate_lambdas_from_curves(curves, rc.lambda_top)
        sgd_train(model, train_ds, lambdas, rc.total_iterations, opt, rc.seed)
        iteration = rc.total_iterations
    else:
        lambdas = [rc.lambda_top] * K
        sgd_train(model, train_ds, lambdas, rc.naive_iterations, opt, rc.seed)
        iteration = rc.naive_iterations
        rd = validate_rd(model, val_images)
        rows.append(_format_row("naive", iteration, 0, lambdas,
                                [p.rate for p in rd], [p.psnr for p in rd], None))
        sched = rc.schedule_params()
        lambdas, state = lambda_scheduling(model, train_ds, val_images, sched,
                                           opt, rc.seed, start_iteration=iteration,
                                           log_rows=rows)
        iteration = state.iteration
        opt.lr_scale = 0.5
        sgd_train(model, train_ds, lambdas, rc.finetune_iterations, opt, rc.seed,
                  start_iter=iteration)
        iteration += rc.finetune_iterations
        rd = validate_rd(model, val_images)
        rows.append(_format_row("finetune", iteration, 0, lambdas,
                                [p.rate for p in rd], [p.psnr for p in rd], None))

    model.lambdas = list(lambdas)
    points = validate_rd(model, val_images)
    save_model(model, out / "checkpoint.bin")
    write_log(out / "log.csv", rows)
    write_rd_points(out / "rd_points.csv", points, model.lambdas)
    return {
        "out_dir": str(out),
        "lambdas": list(lambdas),
        "iterations": iteration,
        "rd_points": points,
    }


def run_sweep(rc: RunConfig, lambdas_grid) -> dict:
    """Train independent fixed-width baselines over a tradeoff grid.

    Produces curves.csv consumable by the 'estimated' regime.
    """
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(rc.to_ini())
    rows = []
    for w in rc.model.widths:
        single = CodecConfig(
            widths=(w,), input_channels=rc.model.input_channels,
            enc_kernels=rc.model.enc_kernels, enc_strides=rc.model.enc_strides,
            gdn_variant=rc.model.gdn_variant, support=rc.model.support,
            bins_per_unit=rc.model.bins_per_unit,
        )
        for lam in lambdas_grid:
            train_ds, val_images = build_datasets(rc)
            model = SlimAutoencoder(single, seed=rc.seed)
            opt = Adam(model.params(), rc.lr, rc.lr_entropy)
            sgd_train(model, train_ds, [lam], rc.total_iterations, opt, rc.seed)
            point = validate_rd(model, val_images)[0]
            rows.append({
                "width": w, "lambda": f"{lam:.10g}",
                "rate_bpp": f"{point.rate:.6f}", "psnr_db": f"{point.psnr:.4f}",
                "mse": f"{point.mse:.8e}",
            })
    path = out / "curves.csv"
    with open(path, "w", newline="") as f:
        wcsv = csv.DictWriter(f, fieldnames=("width", "lambda", "rate_bpp",
                                             "psnr_db", "mse"))
        wcsv.writeheader()
        for row in rows:
            wcsv.writerow(row)
    return {"out_dir": str(out), "curves": str(path), "rows": len(rows)}
