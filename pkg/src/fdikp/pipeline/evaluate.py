"""Metric evaluation of a checkpoint over a paired dataset."""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..losses import mae, psnr, ssim
from .model import deblur

HEADER_NOTE = "metrics on [0,1] intensities; PSNR peak 1.0; MAE on [0,1]"


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)       # dicts: name, psnr, ssim, mae
    baseline: list = field(default_factory=list)   # same for the blurry input
    config: dict = field(default_factory=dict)

    @staticmethod
    def _mean(rows, key):
        vals = [r[key] for r in rows]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def count(self):
        return len(self.rows)

    def mean(self, key="psnr"):
        return self._mean(self.rows, key)

    def baseline_mean(self, key="psnr"):
        return self._mean(self.baseline, key)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {HEADER_NOTE}\n")
            wr = csv.writer(fh)
            wr.writerow(["image", "psnr", "ssim", "mae", "blurry_psnr", "blurry_ssim", "blurry_mae"])
            for r, b in zip(self.rows, self.baseline):
                wr.writerow([r["name"], _fmt(r["psnr"]), _fmt(r["ssim"]), _fmt(r["mae"]),
                             _fmt(b["psnr"]), _fmt(b["ssim"]), _fmt(b["mae"])])
            wr.writerow(["mean"] + [_fmt(self.mean(k)) for k in ("psnr", "ssim", "mae")]
                        + [_fmt(self.baseline_mean(k)) for k in ("psnr", "ssim", "mae")])

    def to_dict(self):
        def clean(rows):
            return [{k: ("identical" if isinstance(v, float) and math.isinf(v) else v) for k, v in r.items()}
                    for r in rows]

        means = {k: self.mean(k) for k in ("psnr", "ssim", "mae")}
        base = {k: self.baseline_mean(k) for k in ("psnr", "ssim", "mae")}
        return {"note": HEADER_NOTE, "count": self.count, "rows": clean(self.rows),
                "baseline_rows": clean(self.baseline), "mean": clean([means])[0],
                "baseline_mean": clean([base])[0], "config": self.config}

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=str) + "\n")


def _fmt(v):
    if isinstance(v, float) and math.isinf(v):
        return "identical"
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def image_metrics(y, yhat, name=""):
    return {"name": name, "psnr": psnr(y, yhat), "ssim": ssim(y, yhat), "mae": mae(y, yhat)}


def evaluate(pairs, store, cfg, names=None, config_echo=None):
    """Deblur every blurry image and score it against its sharp target.

    The blurry input is scored as the baseline row set.
    """
    report = MetricsReport(config=config_echo or {})
    for i, pair in enumerate(pairs):
        name = names[i] if names else f"{i:04d}"
        out = deblur(pair.blurry, store, cfg)
        report.rows.append(image_metrics(pair.sharp, out, name))
        report.baseline.append(image_metrics(pair.sharp, pair.blurry, name))
    return report
