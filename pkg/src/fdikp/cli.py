"""Command line entry point: ``fdikp <subcommand> [options]``.

Exit codes: 0 success, 2 validation failure (bad config, bad arguments, failed gate),
1 runtime error.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import blur
from . import tensor as tc
from .autodiff import load_checkpoint
from .config import ConfigError, TrainConfig, config_from_dict, parse_config, serialize_config

log = logging.getLogger("fdikp")

SYNTH_KEYS = ("count", "patch", "radius_min", "radius_max", "noise_sigma")


class ValidationFailure(Exception):
    """Inputs are well formed but a check did not pass; maps to exit code 2."""


def _load_config(args):
    cfg = TrainConfig()
    extras = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} not found")
        cfg, extras = parse_config(path.read_text(), extra_keys=SYNTH_KEYS)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    for key in ("steps", "lr", "train_dir", "val_dir"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "identity", False):
        cfg.model.identity = True
    cfg.validate()
    return cfg, extras


def _out_dir(args, default):
    out = Path(args.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_run(checkpoint):
    """Checkpoint plus the config echoed in its JSON sidecar."""
    path = Path(checkpoint)
    store = load_checkpoint(path)
    side = Path(str(path) + ".json")
    cfg = config_from_dict(json.loads(side.read_text())["config"]) if side.exists() else TrainConfig()
    return store, cfg


def _model_for(args, cfg):
    if getattr(args, "checkpoint", None):
        store, ck_cfg = load_run(args.checkpoint)
        return store, ck_cfg.model
    if cfg.model.identity:
        return None, cfg.model
    raise ConfigError("a --checkpoint is required unless --identity is given")


def _emit(rows, header):
    """Delimited report on stdout."""
    print(",".join(header))
    for r in rows:
        print(",".join(str(r[h]) for h in header))


# -- subcommands -----------------------------------------------------------------------


def cmd_synth(args):
    _, extras = _load_config(args)
    params = {k: float(v) if k in ("radius_min", "radius_max", "noise_sigma") else int(v)
              for k, v in extras.items()}
    for k in SYNTH_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    scfg = blur.SynthConfig(seed=args.seed if args.seed is not None else 0, **params)
    scfg.validate()
    out = _out_dir(args, "synth")
    pairs = blur.synth_dataset(scfg)
    blur.write_dataset(out, pairs, scfg)
    from .losses import psnr

    values = [psnr(p.sharp, p.blurry) for p in pairs]
    print(f"wrote {len(pairs)} pairs to {out}; mean blurry PSNR {np.mean(values) if values else float('nan'):.4f} dB")
    return 0


def cmd_train(args):
    from .pipeline.train import train
    from .plotting import plot_loss_curve

    cfg, _ = _load_config(args)
    if not cfg.train_dir:
        raise ConfigError("train_dir is not set (config key or --train-dir)")
    out = _out_dir(args, cfg.out_dir)
    train_pairs = blur.read_dataset(cfg.train_dir)
    val_pairs = blur.read_dataset(cfg.val_dir) if cfg.val_dir else []
    (out / "config.txt").write_text(serialize_config(cfg))

    def progress(row, elapsed):
        log.info("step %d phase %d lr %.2e loss %.5f (%.0fs)", row["step"], row["phase"], row["lr"],
                 row["loss"], elapsed)

    ck = train(cfg, train_pairs, val_pairs, out_dir=out, progress=progress)
    plot_loss_curve(ck.history, out / "loss_curve.png", ck.validation)
    if ck.validation:
        _emit(ck.validation, ["step", "psnr", "blurry_psnr", "ssim"])
    print(f"checkpoints in {out}")
    return 0


def cmd_deblur(args):
    from .pipeline.model import deblur

    cfg, _ = _load_config(args)
    store, mcfg = _model_for(args, cfg)
    img = blur.load_png(args.input)
    out = deblur(img, store, mcfg)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    blur.save_png(args.output, out)
    return 0


def cmd_eval(args):
    from .config import config_dict
    from .pipeline.evaluate import evaluate
    from .plotting import plot_triptych

    cfg, _ = _load_config(args)
    store, mcfg = _model_for(args, cfg)
    pairs = blur.read_dataset(args.data, limit=args.limit or None)
    out = _out_dir(args, "eval")
    echo = config_dict(replace(cfg, model=mcfg))
    rep = evaluate(pairs, store, mcfg, config_echo=echo)
    rep.to_csv(out / "metrics.csv")
    rep.to_json(out / "metrics.json")
    if pairs:
        from .pipeline.model import deblur

        plot_triptych(pairs[0].blurry, deblur(pairs[0].blurry, store, mcfg), pairs[0].sharp,
                      out / "example.png")
    print((out / "metrics.csv").read_text(), end="")
    return 0


def cmd_ablate(args):
    from .pipeline.ablate import FIELDS, ablate
    from .plotting import plot_comparison

    cfg, _ = _load_config(args)
    if not cfg.train_dir or not cfg.val_dir:
        raise ConfigError("ablate needs both train_dir and val_dir")
    out = _out_dir(args, "ablate")
    train_pairs = blur.read_dataset(cfg.train_dir)
    val_pairs = blur.read_dataset(cfg.val_dir, limit=cfg.val_limit or None)
    rows = ablate(cfg, args.grid, train_pairs, val_pairs, out_dir=out)
    plot_comparison(rows, out / "ablation.png")
    _emit(rows, FIELDS)
    return 0


def cmd_kernel_inspect(args):
    from .fikp import predict_kernels
    from .plotting import plot_kernels

    store, cfg = load_run(args.checkpoint)
    img = blur.load_png(args.image)
    h, w = img.shape[-2:]
    img = img[:, : h - h % 4, : w - w % 4]
    ks, dmap, att = predict_kernels(img, store, cfg.model)
    out = _out_dir(args, "kernels")
    tc.write_fdkt(out / "kernels.fdkt", ks.kernels)
    tc.write_fdkt(out / "amplitude.fdkt", ks.amplitude)
    tc.write_fdkt(out / "phase.fdkt", ks.phase)
    tc.write_fdkt(out / "dilation.fdkt", dmap)
    for i in range(ks.kernels.shape[0]):
        for tag, plane in (("kernel", ks.kernels[i]), ("amplitude", ks.amplitude[i]), ("phase", ks.phase[i])):
            blur.save_png(out / f"{tag}_{i}.png", _heatmap(plane))
    plot_kernels(ks.kernels, out / "kernels.png", dmap, att)
    rows = [{"kernel": i, "sum": float(k.sum()), "attention": float(np.ravel(att)[i]),
             "offset": float(ks.offset[i])} for i, k in enumerate(ks.kernels)]
    _emit(rows, ["kernel", "sum", "attention", "offset"])
    return 0


def _heatmap(plane, scale=16):
    """Min-max normalised grey heatmap, enlarged by pixel replication."""
    lo, hi = float(plane.min()), float(plane.max())
    norm = (plane - lo) / (hi - lo) if hi > lo else np.zeros_like(plane)
    big = np.kron(norm, np.ones((scale, scale)))
    return np.repeat(big[None], 3, axis=0)


def cmd_gradcheck(args):
    from .pipeline.gradsuite import run_all

    reports = run_all(args.module or None, seed=args.seed or 0)
    for r in reports:
        print(r.line())
    if not all(r.passed for r in reports):
        raise ValidationFailure("gradient check failed")
    return 0


# -- parser ----------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="fdikp", description="FDIKP defocus deblurring toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        return p

    p = common(sub.add_parser("synth", help="generate a synthetic defocus dataset"))
    p.add_argument("--count", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--radius-min", type=float)
    p.add_argument("--radius-max", type=float)
    p.add_argument("--noise-sigma", type=float)
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("train", help="train a model"))
    p.add_argument("--train-dir")
    p.add_argument("--val-dir")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("deblur", help="deblur one PNG"))
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--checkpoint")
    p.add_argument("--identity", action="store_true", help="output = input ablation")
    p.set_defaults(func=cmd_deblur)

    p = common(sub.add_parser("eval", help="score a checkpoint on a dataset"))
    p.add_argument("data")
    p.add_argument("--checkpoint")
    p.add_argument("--identity", action="store_true")
    p.add_argument("--limit", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("ablate", help="run an ablation grid"))
    p.add_argument("--grid", choices=["components", "ddm", "kernel"], default="components")
    p.add_argument("--train-dir")
    p.add_argument("--val-dir")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_ablate)

    p = common(sub.add_parser("kernel-inspect", help="dump predicted kernels for an image"))
    p.add_argument("checkpoint")
    p.add_argument("image")
    p.set_defaults(func=cmd_kernel_inspect)

    p = common(sub.add_parser("gradcheck", help="finite-difference gradient checks"))
    p.add_argument("--module", action="append", choices=["fikp", "dsrm", "losses", "full"])
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValidationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
