"""Training loop: two-phase crops, multi-scale loss, Adam + MultiStep, weight averaging."""

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ..autodiff import Graph, ParamStore, adam_step, backward, lr_schedule, save_checkpoint
from ..config import TrainConfig, config_dict
from ..losses import LossWeights, multiscale_loss_node, multiscale_targets
from .evaluate import evaluate
from .model import fdikp_forward, init_model

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message, step):
        self.step = step
        super().__init__(f"step {step}: {message}")


@dataclass
class Checkpoint:
    store: ParamStore
    step: int
    config: dict
    swa: ParamStore = None
    history: list = field(default_factory=list)
    validation: list = field(default_factory=list)


def loss_weights(cfg):
    return LossWeights(cfg.lambda1, cfg.lambda2, cfg.lambda3, cfg.alpha, cfg.beta, cfg.gamma_freq)


def augment(rng, *imgs):
    k = int(rng.integers(4))
    fh, fv = rng.random() < 0.5, rng.random() < 0.5
    out = []
    for im in imgs:
        im = np.rot90(im, k, axes=(-2, -1))
        if fh:
            im = im[..., ::-1]
        if fv:
            im = im[..., ::-1, :]
        out.append(np.ascontiguousarray(im))
    return out


def sample_batch(rng, pairs, patch, batch, do_augment=True):
    sharp, blurry = [], []
    for _ in range(batch):
        pr = pairs[int(rng.integers(len(pairs)))]
        h, w = pr.sharp.shape[-2:]
        ps = min(patch, h, w) // 4 * 4
        y0 = int(rng.integers(h - ps + 1))
        x0 = int(rng.integers(w - ps + 1))
        ys = pr.sharp[:, y0:y0 + ps, x0:x0 + ps]
        xs = pr.blurry[:, y0:y0 + ps, x0:x0 + ps]
        if do_augment:
            ys, xs = augment(rng, ys, xs)
        sharp.append(ys)
        blurry.append(xs)
    return np.stack(sharp), np.stack(blurry)


def batch_loss(graph, store, cfg, blurry, sharp):
    """Build the multi-scale loss node for one batch; returns (loss node, terms)."""
    outs = fdikp_forward(graph, blurry, store, cfg.model)
    targets = [graph.constant(t) for t in multiscale_targets(sharp)]
    return multiscale_loss_node(targets, outs, loss_weights(cfg))


def _write_sidecar(path, step, cfg, extra=None):
    meta = {"step": step, "config": config_dict(cfg)}
    meta.update(extra or {})
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, default=str) + "\n")


def train(cfg, train_pairs, val_pairs=None, out_dir=None, progress=None):
    """Train from scratch; deterministic for a fixed ``cfg.seed`` (single-threaded BLAS).

    Writes ``train_log.csv``, ``val_log.csv``, ``final.fdkc`` and ``swa.fdkc`` into
    ``out_dir`` when given.
    """
    cfg.validate()
    dtype = np.float32 if cfg.dtype == "float32" else np.float64
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    store = init_model(cfg.model, seed=cfg.seed, dtype=dtype)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    milestones = cfg.milestone_steps()
    phase2 = int(round(cfg.phase2_start * cfg.steps))
    weights = loss_weights(cfg)
    log.info("loss weights lambda=%s alpha=%g gamma=%g (LPIPS beta=%g inert)",
             weights.scales, weights.alpha, weights.gamma, weights.beta)

    swa_sum, swa_count = None, 0
    history, validation = [], []
    val_pairs = val_pairs or []
    if cfg.val_limit:
        val_pairs = val_pairs[:cfg.val_limit]

    def validate(step):
        if not val_pairs:
            return
        rep = evaluate(val_pairs, store, cfg.model)
        row = {"step": step, "psnr": rep.mean("psnr"), "blurry_psnr": rep.baseline_mean("psnr"),
               "ssim": rep.mean("ssim")}
        validation.append(row)
        log.info("val step %d psnr %.3f (blurry %.3f)", step, row["psnr"], row["blurry_psnr"])

    t0 = time.time()
    with threadpool_limits(limits=1):
        for step in range(cfg.steps):
            in_phase2 = step >= phase2
            patch, bsz = (cfg.patch2, cfg.batch2) if in_phase2 else (cfg.patch1, cfg.batch1)
            sharp, blurry = sample_batch(rng, train_pairs, patch, bsz, cfg.augment)
            lr = lr_schedule(step, cfg.lr, milestones, cfg.gamma)
            g = Graph(dtype)
            loss, terms = batch_loss(g, store, cfg, blurry, sharp)
            value = float(loss.value)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value}", step)
            backward(g, loss, store)
            adam_step(store, lr=lr, beta1=cfg.beta1, beta2=cfg.beta2)
            row = {"step": step, "phase": 2 if in_phase2 else 1, "lr": lr, "loss": value, **terms}
            history.append(row)
            if in_phase2 and cfg.swa_every and (step - phase2) % cfg.swa_every == 0:
                if swa_sum is None:
                    swa_sum = {k: np.zeros(v.shape) for k, v in store.items()}
                for k, v in store.items():
                    swa_sum[k] += v
                swa_count += 1
            if progress and step % cfg.log_every == 0:
                progress(row, time.time() - t0)
            if cfg.val_every and step and step % cfg.val_every == 0:
                validate(step)
        validate(cfg.steps)

    swa = None
    if swa_count:
        swa = ParamStore(dtype)
        for k, v in swa_sum.items():
            swa.add(k, v / swa_count)
    ck = Checkpoint(store, cfg.steps, config_dict(cfg), swa, history, validation)
    if out:
        write_logs(out, history, validation)
        save_checkpoint(out / "final.fdkc", store)
        _write_sidecar(out / "final.fdkc", cfg.steps, cfg)
        if swa is not None:
            save_checkpoint(out / "swa.fdkc", swa, with_optimizer=False)
            _write_sidecar(out / "swa.fdkc", cfg.steps, cfg, {"swa_snapshots": swa_count})
    return ck


def write_logs(out, history, validation):
    out = Path(out)
    if history:
        keys = list(history[0])
        with open(out / "train_log.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=keys)
            wr.writeheader()
            for r in history:
                wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    if validation:
        with open(out / "val_log.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(validation[0]))
            wr.writeheader()
            for r in validation:
                wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
