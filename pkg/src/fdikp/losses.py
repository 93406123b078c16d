"""Training losses and image-quality metrics.

Array functions (``l2_loss``, ``psnr``, ...) work on numpy images in [0, 1]; the
``*_node`` variants build differentiable graph expressions for training.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .autodiff import ops

#: PSNR value reported for identical images
IDENTICAL = math.inf


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 0.2
    lambda3: float = 0.1
    alpha: float = 1.0
    beta: float = 0.2   # LPIPS slot, not evaluated
    gamma: float = 0.2

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be >= 0")

    @property
    def scales(self):
        return (self.lambda1, self.lambda2, self.lambda3)


def _same_shape(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    return y, yhat


def l2_loss(y, yhat):
    y, yhat = _same_shape(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def freq_loss(y, yhat):
    """Mean |.| over the real and imaginary parts of fft2(y) - fft2(yhat)."""
    y, yhat = _same_shape(y, yhat)
    d = tc.fft2(y - yhat)
    return float(np.mean(np.abs(np.stack([d.real, d.imag]))))


def single_scale_loss(y, yhat, w):
    return w.alpha * l2_loss(y, yhat) + w.gamma * freq_loss(y, yhat)


def multiscale_targets(y):
    y = np.asarray(y, dtype=float)
    half = tc.resize_half(y)
    return y, half, tc.resize_half(half)


def multiscale_loss(targets, outputs, w):
    if len(targets) != 3 or len(outputs) != 3:
        raise ValueError("expected three scales")
    return float(sum(lam * single_scale_loss(t, o, w) for lam, t, o in zip(w.scales, targets, outputs)))


def mae(y, yhat):
    y, yhat = _same_shape(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def psnr(y, yhat, peak=1.0):
    y, yhat = _same_shape(y, yhat)
    d = np.ravel(y - yhat)
    # exactly rounded sum, so a uniform error of 0.1 lands on exactly 20 dB
    mse = math.fsum(d * d) / d.size
    if mse == 0:
        return IDENTICAL
    return 20.0 * math.log10(peak / math.sqrt(mse))


def _gauss_window(size=11, sigma=1.5):
    c = np.arange(size) - size // 2
    g = np.exp(-(c ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    from numpy.lib.stride_tricks import sliding_window_view

    rows = np.tensordot(sliding_window_view(img, g.size, axis=-2), g, axes=([-1], [0]))
    return np.tensordot(sliding_window_view(rows, g.size, axis=-1), g, axes=([-1], [0]))


def ssim(y, yhat, peak=1.0, size=11, sigma=1.5):
    """Gaussian-windowed SSIM (valid region); channel mean for multi-channel input."""
    y, yhat = _same_shape(y, yhat)
    if y.shape[-1] < size or y.shape[-2] < size:
        raise ValueError(f"image {y.shape[-2:]} smaller than the {size}x{size} window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    g = _gauss_window(size, sigma)
    mu_x = _filter_valid(y, g)
    mu_y = _filter_valid(yhat, g)
    sxx = _filter_valid(y * y, g) - mu_x * mu_x
    syy = _filter_valid(yhat * yhat, g) - mu_y * mu_y
    sxy = _filter_valid(y * yhat, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    smap = num / den
    if smap.ndim == 3:
        return float(np.mean([m.mean() for m in smap]))
    return float(smap.mean())


# -- graph losses ----------------------------------------------------------------------


def l2_loss_node(y, yhat):
    return ops.mean(ops.square(yhat - y))


def freq_loss_node(y, yhat):
    return ops.mean(ops.abs(ops.fft2(yhat - y)))


def single_scale_loss_node(y, yhat, w):
    l2 = l2_loss_node(y, yhat)
    fq = freq_loss_node(y, yhat)
    return l2 * w.alpha + fq * w.gamma, l2, fq


def multiscale_loss_node(targets, outputs, w):
    """Returns (total, per-term dict) with terms l2_s / freq_s for s in 1, 2, 4."""
    total = None
    terms = {}
    for lam, t, o, tag in zip(w.scales, targets, outputs, ("1", "2", "4")):
        loss, l2, fq = single_scale_loss_node(t, o, w)
        terms[f"l2_{tag}"] = float(l2.value)
        terms[f"freq_{tag}"] = float(fq.value)
        part = loss * lam
        total = part if total is None else total + part
    return total, terms
