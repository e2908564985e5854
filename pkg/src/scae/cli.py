"""Command-line surface.

Commands: train, encode, decode, eval, cost, sweep.  Exit codes: 0 on
success, 1 for usage/configuration errors, 2 for data errors, 3 for
numeric failures.  SCAE_OUTPUT_DIR sets the default output directory and
SCAE_BACKEND selects the kernel backend (numba or numpy).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .checkpoint import load_model
from .container import decode_image, encode_image
from .errors import ScaeError, ConfigError
from .metrics import cost_report, rd_sweep, write_csv, write_json, RD_COLUMNS
from .model import CodecConfig, desk_config, full_config, psnr
from .pipeline import RunConfig, run_sweep, run_training


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _default_out() -> str:
    return os.environ.get("SCAE_OUTPUT_DIR", ".")


def _parse_ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as e:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from e


def _parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from e


def _model_config(args) -> CodecConfig:
    if getattr(args, "preset", None) == "full":
        base = full_config()
    else:
        base = desk_config()
    return CodecConfig(
        widths=_parse_ints(args.widths) if args.widths else base.widths,
        input_channels=base.input_channels,
        enc_kernels=_parse_ints(args.kernels) if args.kernels else base.enc_kernels,
        enc_strides=_parse_ints(args.strides) if args.strides else base.enc_strides,
        gdn_variant=args.gdn or base.gdn_variant,
        support=args.support or base.support,
        bins_per_unit=base.bins_per_unit,
    )


def _add_model_flags(p):
    p.add_argument("--preset", choices=("desk", "full"), default="desk",
                   help="base model configuration")
    p.add_argument("--widths", help="comma-separated channel widths, e.g. 4,8,16")
    p.add_argument("--kernels", help="encoder kernel sizes per stage")
    p.add_argument("--strides", help="encoder strides per stage")
    p.add_argument("--gdn", choices=("switch", "slim", "slim_plus"),
                   help="normalization parameter sharing variant")
    p.add_argument("--support", type=int, help="latent support half-width L")


def _add_data_flags(p):
    p.add_argument("--synthetic", default="gaussian_blobs",
                   help="synthetic dataset kind (gaussian_blobs, gradients, "
                        "band_limited_noise)")
    p.add_argument("--data", default="", help="directory of PNG/PPM images "
                                              "(overrides --synthetic)")
    p.add_argument("--image-size", type=int, default=24)
    p.add_argument("--train-images", type=int, default=200)
    p.add_argument("--val-images", type=int, default=10)
    p.add_argument("--cutoff", type=float, default=0.5,
                   help="band_limited_noise cutoff as a fraction of Nyquist")
    p.add_argument("--data-seed", type=int, default=1000)
    p.add_argument("--split-seed", type=int, default=0)


def _run_config(args, out_dir) -> RunConfig:
    return RunConfig(
        model=_model_config(args),
        regime=getattr(args, "regime", "naive"),
        seed=args.seed,
        out_dir=str(out_dir),
        lambda_top=args.lambda_top,
        kappa=getattr(args, "kappa", 1.25),
        sched_t=getattr(args, "sched_t", 200),
        sched_m=getattr(args, "sched_m", 7),
        lr=args.lr,
        lr_entropy=args.lr_entropy,
        naive_iterations=getattr(args, "naive_iterations", 3000),
        total_iterations=args.iterations,
        finetune_iterations=getattr(args, "finetune_iterations", 2000),
        batch_size=args.batch,
        crop_size=args.crop,
        synthetic=args.synthetic,
        data_dir=args.data,
        image_size=args.image_size,
        train_images=args.train_images,
        val_images=args.val_images,
        cutoff=args.cutoff,
        data_seed=args.data_seed,
        split_seed=args.split_seed,
        curves_path=getattr(args, "curves", "") or "",
    )


def cmd_train(args) -> int:
    out_dir = Path(args.out) if args.out else Path(_default_out())
    if args.config:
        rc = RunConfig.from_ini(Path(args.config).read_text(), out_dir=str(out_dir))
        rc.regime = args.regime or rc.regime
        rc.seed = args.seed if args.seed is not None else rc.seed
        if args.curves:
            rc.curves_path = args.curves
    else:
        if args.seed is None:
            args.seed = 0
        rc = _run_config(args, out_dir)
        rc.regime = args.regime or "scheduled"
    summary = run_training(rc)
    print(f"run directory: {summary['out_dir']}")
    print(f"final tradeoffs: {', '.join(f'{v:.6g}' for v in summary['lambdas'])}")
    for p in summary["rd_points"]:
        print(f"level {p.level} (width {p.width}): {p.rate:.4f} bpp, {p.psnr:.2f} dB")
    return 0


def cmd_encode(args) -> int:
    model = load_model(args.checkpoint)
    x = data_mod.load_image(args.image)
    if args.scalable:
        k = model.config.K
    else:
        k = args.width_level if args.width_level is not None else model.config.K
    stream, info = encode_image(model, x, k, scalable=args.scalable)
    out = Path(args.out) if args.out else Path(args.image).with_suffix(".scae")
    out.write_bytes(stream)
    print(f"{out}: {info['payload_bytes']} payload bytes, {info['bpp']:.4f} bpp "
          f"(level {info['level']}{', scalable' if info['scalable'] else ''})")
    return 0


def cmd_decode(args) -> int:
    model = load_model(args.checkpoint)
    stream = Path(args.bitstream).read_bytes()
    xhat, info = decode_image(model, stream, levels=args.levels)
    out = Path(args.out) if args.out else Path(args.bitstream).with_suffix(".png")
    data_mod.save_image(out, xhat)
    line = f"{out}: decoded at level {info['level']}, {info['bpp']:.4f} bpp"
    if args.original:
        x = data_mod.load_image(args.original)
        line += f", PSNR {psnr(x, xhat):.2f} dB"
    print(line)
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    if args.data:
        paths = sorted(
            p for p in Path(args.data).iterdir()
            if p.suffix.lower() in (".png", ".ppm", ".pnm")
        )
        images = [data_mod.load_image(p) for p in paths]
    else:
        ds = data_mod.make_synthetic(args.synthetic, args.val_images,
                                     args.image_size, seed=args.data_seed,
                                     cutoff=args.cutoff)
        images = ds.full_images()
    rows = rd_sweep(model, images, timing=args.timing)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "eval.csv", rows, columns=list(RD_COLUMNS))
    write_json(out / "eval.json", rows)
    for r in rows:
        print(f"level {r['level']} (width {r['width']}): est {r['est_bpp']:.4f} bpp, "
              f"coded {r['actual_bpp']:.4f} bpp, {r['psnr_db']:.2f} dB")
    print(f"wrote {out / 'eval.csv'} and {out / 'eval.json'}")
    return 0


def cmd_cost(args) -> int:
    config = _model_config(args)
    rows = cost_report(config, args.height, args.width)
    print(f"input {args.height}x{args.width}, widths {config.widths}")
    print(f"{'width':>6} {'MFLOPs':>12} {'params MB':>10} {'features MB':>12}")
    for r in rows:
        print(f"{r['width']:>6} {r['flops'] / 1e6:>12.2f} "
              f"{r['param_bytes'] / 2**20:>10.3f} {r['feature_bytes'] / 2**20:>12.3f}")
    print(f"total stored model: {rows[0]['param_bytes_total'] / 2**20:.3f} MB")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "cost.csv", rows)
        write_json(out / "cost.json", rows)
        print(f"wrote {out / 'cost.csv'} and {out / 'cost.json'}")
    return 0


def cmd_sweep(args) -> int:
    out_dir = Path(args.out or _default_out())
    if args.seed is None:
        args.seed = 0
    args.regime = "naive"
    rc = _run_config(args, out_dir)
    lambdas = _parse_floats(args.lambdas)
    summary = run_sweep(rc, lambdas)
    print(f"wrote {summary['curves']} ({summary['rows']} points)")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="scae", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model (naive, estimated, scheduled)")
    _add_model_flags(t)
    _add_data_flags(t)
    t.add_argument("--regime", choices=("naive", "estimated", "scheduled"))
    t.add_argument("--config", help="RunConfig INI file (flags override)")
    t.add_argument("--curves", help="sweep curves.csv for the estimated regime")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--lambda-top", type=float, default=0.01, dest="lambda_top")
    t.add_argument("--kappa", type=float, default=1.25)
    t.add_argument("--sched-t", type=int, default=200, dest="sched_t")
    t.add_argument("--sched-m", type=int, default=7, dest="sched_m")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-entropy", type=float, default=1e-2, dest="lr_entropy")
    t.add_argument("--iterations", type=int, default=8000)
    t.add_argument("--naive-iterations", type=int, default=3000,
                   dest="naive_iterations")
    t.add_argument("--finetune-iterations", type=int, default=2000,
                   dest="finetune_iterations")
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--crop", type=int, default=24)
    t.add_argument("--out", help="run directory")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("encode", help="compress an image to a .scae bitstream")
    e.add_argument("image")
    e.add_argument("-c", "--checkpoint", required=True)
    e.add_argument("-k", "--width-level", type=int, dest="width_level",
                   help="1-based width level (default: widest)")
    e.add_argument("--scalable", action="store_true",
                   help="independently coded channel groups (progressive decode)")
    e.add_argument("-o", "--out")
    e.set_defaults(fn=cmd_encode)

    d = sub.add_parser("decode", help="decompress a .scae bitstream")
    d.add_argument("bitstream")
    d.add_argument("-c", "--checkpoint", required=True)
    d.add_argument("--levels", type=int,
                   help="decode only the first L channel groups (scalable streams)")
    d.add_argument("--original", help="reference image for PSNR")
    d.add_argument("-o", "--out")
    d.set_defaults(fn=cmd_decode)

    v = sub.add_parser("eval", help="rate-distortion and cost table for a checkpoint")
    v.add_argument("-c", "--checkpoint", required=True)
    v.add_argument("--data", default="", help="directory of PNG/PPM images")
    v.add_argument("--synthetic", default="gaussian_blobs")
    v.add_argument("--image-size", type=int, default=24)
    v.add_argument("--val-images", type=int, default=10)
    v.add_argument("--cutoff", type=float, default=0.5)
    v.add_argument("--data-seed", type=int, default=1001)
    v.add_argument("--timing", action="store_true",
                   help="measure encode/decode wall clock (non-reproducible)")
    v.add_argument("--out")
    v.set_defaults(fn=cmd_eval)

    c = sub.add_parser("cost", help="analytic FLOPs/memory accounting (no checkpoint)")
    _add_model_flags(c)
    c.add_argument("--height", type=int, default=768)
    c.add_argument("--width", type=int, default=512)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_cost)

    s = sub.add_parser("sweep", help="train independent fixed-width baselines "
                                     "over a tradeoff grid")
    _add_model_flags(s)
    _add_data_flags(s)
    s.add_argument("--lambdas", required=True,
                   help="comma-separated tradeoffs, e.g. 0.002,0.01,0.05")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--iterations", type=int, default=1500)
    s.add_argument("--lambda-top", type=float, default=0.01, dest="lambda_top")
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--lr-entropy", type=float, default=1e-2, dest="lr_entropy")
    s.add_argument("--batch", type=int, default=8)
    s.add_argument("--crop", type=int, default=24)
    s.add_argument("--out", help="output directory for curves.csv")
    s.set_defaults(fn=cmd_sweep)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScaeError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
