"""``swinfsr`` command line: train, infer, eval, ensemble, gradcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (non-finite training values or a failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint, checks
from .checkpoint import CheckpointError
from .data import DataError, DatasetDir, bicubic_upsample, png_read, png_write
from .inference import (TILE_OVERLAP, TtaPlan, bilinear_predictor, ensemble, evaluate, infer, model_predictor,
                        read_image_set, window_tile, write_image_set)
from .metrics import aggregate, write_report
from .model import build
from .training import NumericError, parse_config, train_loop

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _tta_plan(name: str | None) -> TtaPlan | None:
    plans = {"full": TtaPlan(), "h": TtaPlan(True, False), "v": TtaPlan(False, True),
             "identity": TtaPlan.identity()}
    if name is None:
        return None
    return plans[name]


def bicubic_predictor(left: np.ndarray, right: np.ndarray):
    return np.clip(bicubic_upsample(left), 0, 1), np.clip(bicubic_upsample(right), 0, 1)


def _predictor(args):
    if getattr(args, "baseline", None) == "bicubic":
        return bicubic_predictor, None
    if getattr(args, "baseline", None) == "bilinear":
        return bilinear_predictor, None
    if not args.ckpt:
        raise UsageError("--ckpt is required (or --baseline)")
    model = checkpoint.load(args.ckpt)
    return model_predictor(model), model.config.window


def _tile(args, window):
    if not args.tile:
        return None
    if args.tile < 1:
        raise UsageError("--tile must be positive")
    tile = window_tile(args.tile, (window.wh, window.ww) if window else (1, 1))
    if min(tile) <= TILE_OVERLAP:
        raise UsageError(f"--tile {args.tile} gives {tile[0]}x{tile[1]} tiles; both sides must exceed "
                         f"the {TILE_OVERLAP}-pixel overlap")
    return tile


def cmd_train(args) -> int:
    try:
        train_cfg, model_cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{args.config}: config file not found") from exc
    except ValueError as exc:
        raise UsageError(f"{args.config}: {exc}") from exc
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    data = list(DatasetDir(args.data, args.manifest))
    val = list(DatasetDir(args.val)) if args.val else None
    model = build(model_cfg, train_cfg.seed)
    result = train_loop(model, data, train_cfg, val=val, out_dir=args.out)
    print(f"trained {train_cfg.total_steps} steps; final loss {result.losses[-1]:.6f}; "
          f"checkpoint {Path(args.out) / 'final.sfsr'}")
    return EXIT_OK


def cmd_infer(args) -> int:
    predict, window = _predictor(args)
    left, right = png_read(args.left), png_read(args.right)
    if left.shape != right.shape:
        raise DataError(f"left/right sizes differ: {left.shape} vs {right.shape}")
    sl, sr = infer(predict, left, right, _tta_plan(args.tta), _tile(args, window))
    png_write(sl, args.out_left)
    png_write(sr, args.out_right)
    print(f"wrote {args.out_left} and {args.out_right} ({sl.shape[1]}x{sl.shape[2]})")
    return EXIT_OK


def _report_path(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}{suffix}{path.suffix or '.csv'}")


def cmd_eval(args) -> int:
    predict, window = _predictor(args)
    pairs = list(DatasetDir(args.data, args.manifest))
    if not pairs:
        raise DataError(f"{args.data}: empty dataset")
    tile = _tile(args, window)
    runs = [("", None)]
    if args.tta:
        runs.append(("_tta", _tta_plan(args.tta)))
    report = Path(args.report)
    for suffix, plan in runs:
        scores = evaluate(predict, pairs, plan, tile)
        path = _report_path(report, suffix) if suffix else report
        write_report(scores, path)
        p, s = aggregate(scores)
        label = "tta" if plan else "plain"
        print(f"{label}: PSNR {p:.4f} dB  SSIM {s:.4f}  ({len(scores)} scenes) -> {path}")
    if args.out:
        images = {}
        plan = runs[-1][1]
        for pair in pairs:
            images[pair.scene] = infer(predict, pair.left, pair.right, plan, tile)
        write_image_set(images, args.out)
    return EXIT_OK


def cmd_ensemble(args) -> int:
    sets = [read_image_set(d) for d in args.inputs]
    write_image_set(ensemble(sets), args.out)
    print(f"ensembled {len(sets)} sets into {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = checks.run_suite(args.scope, echo=print)
    failed = [r.name for r in reports if not r.passed]
    worst = max(r.max_rel_error for r in reports)
    print(f"{len(reports) - len(failed)}/{len(reports)} passed; worst max_rel_err={worst:.3e}")
    if failed:
        print("FAILED: " + ", ".join(failed))
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swinfsr", description="Stereo x4 super-resolution (SwinFSR) on numpy.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train from a key=value config file")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True, help="dataset directory of scene folders")
    t.add_argument("--out", required=True, help="output directory for log and checkpoints")
    t.add_argument("--seed", type=int)
    t.add_argument("--manifest", help="file listing the training scenes")
    t.add_argument("--val", help="validation dataset directory (PSNR logged every val_every steps)")
    t.set_defaults(func=cmd_train)

    tta_kw = dict(nargs="?", const="full", choices=("full", "h", "v", "identity"),
                  help="test-time augmentation plan (default full = identity, H, V, HV)")
    i = sub.add_parser("infer", help="super-resolve one stereo pair")
    i.add_argument("--ckpt")
    i.add_argument("--baseline", choices=("bicubic", "bilinear"), help="use a fixed upsampler instead of a model")
    i.add_argument("--left", required=True)
    i.add_argument("--right", required=True)
    i.add_argument("--out-left", required=True)
    i.add_argument("--out-right", required=True)
    i.add_argument("--tta", **tta_kw)
    i.add_argument("--tile", type=int, help="LR tile size (rounded up to window multiples)")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="PSNR/SSIM report over a dataset")
    e.add_argument("--ckpt")
    e.add_argument("--baseline", choices=("bicubic", "bilinear"))
    e.add_argument("--data", required=True)
    e.add_argument("--manifest")
    e.add_argument("--report", required=True, help="CSV path; with --tta a second *_tta CSV is written")
    e.add_argument("--tta", **tta_kw)
    e.add_argument("--tile", type=int)
    e.add_argument("--out", help="also write SR images (sr0/sr1.png per scene) here")
    e.set_defaults(func=cmd_eval)

    en = sub.add_parser("ensemble", help="average several SR image sets")
    en.add_argument("--inputs", nargs="+", required=True)
    en.add_argument("--out", required=True)
    en.set_defaults(func=cmd_ensemble)

    g = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    g.add_argument("--scope", default="all", choices=("all",) + checks.SCOPES)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"swinfsr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"swinfsr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"swinfsr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
