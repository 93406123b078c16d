"""Ablation grids: one trained-and-evaluated row per configuration, same seed everywhere."""

import csv
from dataclasses import replace
from pathlib import Path

from ..config import ConfigError
from .evaluate import evaluate
from .train import train

GRIDS = {
    "components": [
        ("full", {}),
        ("disable_pac", {"disable_pac": True}),
        ("disable_dikp", {"disable_dikp": True}),
    ],
    "ddm": [
        ("full", {}),
        ("spatial_only", {"ddm_variant": "spatial_only"}),
        ("frequency_only", {"ddm_variant": "frequency_only"}),
        ("dual_branch", {"ddm_variant": "dual_branch"}),
    ],
    "kernel": [
        ("K=3", {"n_kernels": 3, "kernel_size": 3}),
        ("K=5", {"n_kernels": 5, "kernel_size": 5}),
        ("K=7", {"n_kernels": 7, "kernel_size": 7}),
    ],
}

FIELDS = ["config", "psnr", "ssim", "mae", "blurry_psnr", "blurry_ssim", "blurry_mae",
          "delta_psnr", "delta_vs_first", "final_loss"]


def row_config(cfg, overrides, sweep=False):
    model = replace(cfg.model, **overrides)
    out = replace(cfg, model=model, kernel_sweep=sweep or cfg.kernel_sweep)
    out.validate()
    return out


def run_row(cfg, label, train_pairs, val_pairs, out_dir=None):
    ck = train(cfg, train_pairs, None, out_dir=out_dir)
    rep = evaluate(val_pairs, ck.store, cfg.model)
    final = ck.history[-1]["loss"] if ck.history else float("nan")
    return {
        "config": label,
        "psnr": rep.mean("psnr"), "ssim": rep.mean("ssim"), "mae": rep.mean("mae"),
        "blurry_psnr": rep.baseline_mean("psnr"), "blurry_ssim": rep.baseline_mean("ssim"),
        "blurry_mae": rep.baseline_mean("mae"),
        "delta_psnr": rep.mean("psnr") - rep.baseline_mean("psnr"),
        "final_loss": final,
    }


def ablate(cfg, grid, train_pairs, val_pairs, out_dir=None):
    """Train and evaluate every row of ``grid``.

    ``grid`` is a name from GRIDS or a list of (label, model overrides). The kernel grid
    runs in sweep mode, which requires N = K for every row.
    """
    sweep = grid == "kernel"
    rows_spec = GRIDS[grid] if isinstance(grid, str) else list(grid)
    if not rows_spec:
        raise ConfigError("empty ablation grid")
    out = Path(out_dir) if out_dir else None
    rows = []
    for label, overrides in rows_spec:
        rcfg = row_config(cfg, overrides, sweep)
        sub = out / _slug(label) if out else None
        rows.append(run_row(rcfg, label, train_pairs, val_pairs, sub))
    ref = rows[0]["psnr"]
    for r in rows:
        r["delta_vs_first"] = r["psnr"] - ref
    if out:
        write_csv(out / "ablation.csv", rows)
    return rows


def _slug(label):
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label)


def write_csv(path, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=FIELDS)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
