"""Figure rendering for reports. Everything goes to files through the Agg backend."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def moving_average(values, window=20):
    v = np.asarray(values, dtype=float)
    if v.size < window:
        return v
    c = np.cumsum(np.insert(v, 0, 0.0))
    return (c[window:] - c[:-window]) / window


def plot_loss_curve(history, path, validation=None, window=20):
    """Training loss (raw and moving average) with validation PSNR on a twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        steps = np.array([r["step"] for r in history])
        loss = np.array([r["loss"] for r in history])
        ax.plot(steps, loss, color="0.75", lw=0.6, label="loss")
        ma = moving_average(loss, window)
        if ma.size != loss.size:
            ax.plot(steps[window - 1:], ma, color="C0", lw=1.2, label=f"{window}-step mean")
        ax.set_xlabel("step")
        ax.set_ylabel("multi-scale loss")
        ax.set_yscale("log")
        if validation:
            ax2 = ax.twinx()
            vs = [r["step"] for r in validation]
            ax2.plot(vs, [r["psnr"] for r in validation], "o-", color="C3", ms=3, label="val PSNR")
            ax2.plot(vs, [r["blurry_psnr"] for r in validation], "--", color="C3", lw=0.8,
                     label="blurry PSNR")
            ax2.set_ylabel("PSNR (dB)")
            ax2.spines["right"].set_visible(True)
            ax2.legend(loc="center right")
        ax.legend(loc="upper right")
        return _save(fig, path)


def plot_kernels(kernels, path, dmap=None, attention=None):
    """Heatmaps of the N predicted inverse kernels, plus the dilated map when given."""
    kernels = np.asarray(kernels)
    n = kernels.shape[0]
    cols = n + (dmap is not None)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, cols, figsize=(1.6 * cols, 1.9), squeeze=False)
        lim = float(np.abs(kernels).max()) or 1.0
        for i in range(n):
            a = axes[0, i]
            a.imshow(kernels[i], cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
            title = f"k{i}"
            if attention is not None:
                title += f"  w={float(np.ravel(attention)[i]):.2f}"
            a.set_title(title)
            a.set_xticks([])
            a.set_yticks([])
        if dmap is not None:
            a = axes[0, -1]
            im = a.imshow(dmap, cmap="viridis")
            a.set_title("dilation")
            a.set_xticks([])
            a.set_yticks([])
            fig.colorbar(im, ax=a, fraction=0.046, pad=0.04)
        return _save(fig, path)


def plot_comparison(rows, path, key="psnr", label="config"):
    """Bar chart of one metric across ablation rows, with the blurry baseline as a line."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(3.0, 1.1 * len(rows)), 3.0))
        names = [str(r[label]) for r in rows]
        vals = [r[key] for r in rows]
        ax.bar(range(len(rows)), vals, color="C0", width=0.6)
        base = [r.get(f"blurry_{key}") for r in rows]
        if base and base[0] is not None:
            ax.axhline(base[0], color="k", ls="--", lw=0.8, label="blurry input")
            ax.legend(loc="lower right")
            lo = min(min(vals), base[0])
            hi = max(max(vals), base[0])
            pad = 0.1 * (hi - lo) + 0.05
            ax.set_ylim(lo - pad, hi + pad)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel(key.upper())
        return _save(fig, path)


def plot_triptych(blurry, output, sharp, path):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.7))
        for a, img, t in zip(axes, (blurry, output, sharp), ("blurry", "deblurred", "sharp")):
            a.imshow(np.clip(np.moveaxis(np.asarray(img), 0, -1), 0, 1), interpolation="nearest")
            a.set_title(t)
            a.axis("off")
        return _save(fig, path)
