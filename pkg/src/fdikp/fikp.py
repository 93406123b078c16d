"""Frequency inverse-kernel prediction and position-adaptive deconvolution.

Graph-level functions take and return :class:`~fdikp.autodiff.Node` objects and read
their weights through a :class:`~fdikp.autodiff.Scope`. Kernels live in a centred
layout (origin at index (K-1)/2) everywhere outside the internal FFT calls.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .autodiff import Graph, Scope, ops
from .blur import BlurKernel, disk_kernel


@dataclass
class KernelSet:
    kernels: np.ndarray      # (N, K, K) signed spatial kernels, centred
    amplitude: np.ndarray    # (N, K, K) |K_A|, centred frequency layout
    phase: np.ndarray        # (N, K, K) K_P', centred frequency layout
    offset: np.ndarray       # (N,) additive renormalisation applied after the inverse FFT

    @property
    def count(self):
        return self.kernels.shape[0]

    @property
    def size(self):
        return self.kernels.shape[-1]

    def reconstruct(self):
        """Spatial kernels recomputed from the polar construction record."""
        spec = tc.from_polar(tc.PolarSpectrum(np.fft.ifftshift(self.amplitude, axes=(-2, -1)),
                                              np.fft.ifftshift(self.phase, axes=(-2, -1))))
        raw = np.fft.fftshift(np.fft.ifft2(spec, axes=(-2, -1)), axes=(-2, -1))
        return raw.real + self.offset[:, None, None], raw.imag


# -- analytic inverse ------------------------------------------------------------------


def analytic_inverse(kernel, pad, eps, support=None):
    """Wiener-regularised inverse kernel conj(K) / (|K|^2 + eps) on a pad x pad grid.

    ``support`` (odd) crops the centred result; by default the full grid is returned,
    centred at index pad // 2.
    """
    weights = kernel.weights if isinstance(kernel, BlurKernel) else np.asarray(kernel, float)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if pad < weights.shape[0]:
        raise ValueError(f"pad {pad} smaller than kernel size {weights.shape[0]}")
    spec = tc.fft2(tc.embed_centered(weights, (pad, pad)))
    power = np.abs(spec) ** 2
    if eps == 0:
        zeros = np.argwhere(np.abs(spec) < 1e-12)
        if zeros.size:
            raise ZeroDivisionError(f"spectral zero at bin {tuple(int(v) for v in zeros[0])}; use eps > 0")
    inv = tc.ifft2(np.conj(spec) / (power + eps))
    inv = np.fft.fftshift(inv)
    if support is None:
        return inv
    if support % 2 == 0 or support > pad:
        raise ValueError("support must be odd and <= pad")
    c = pad // 2
    r = support // 2
    return inv[c - r:c + r + 1, c - r:c + r + 1]


def inverse_bank(n, k, radii=None, eps=1e-2, pad=32):
    """Fixed analytic inverse kernels for a ladder of disk radii, renormalised to sum 1."""
    radii = np.linspace(0.5, 3.0, n) if radii is None else radii
    bank = []
    for r in radii:
        inv = analytic_inverse(disk_kernel(float(r)), max(pad, disk_kernel(float(r)).size), eps, support=k)
        bank.append(inv + (1.0 - inv.sum()) / inv.size)
    return np.stack(bank)


# -- parameters ------------------------------------------------------------------------


def _conv_init(store, rng, name, c_out, c_in, k, scale=1.0, zero=False):
    fan_in = c_in * k * k
    w = np.zeros((c_out, c_in, k, k)) if zero else rng.normal(0, scale * math.sqrt(2.0 / fan_in), (c_out, c_in, k, k))
    store.add(name + ".w", w)
    store.add(name + ".b", np.zeros(c_out))


def init_fikp(store, rng, cfg, prefix="fikp."):
    c, n = cfg.predictor_width, cfg.n_kernels
    for branch in ("amp", "phase"):
        _conv_init(store, rng, f"{prefix}{branch}.c1", c, 1, 3)
        _conv_init(store, rng, f"{prefix}{branch}.c2", c, c, 3)
        _conv_init(store, rng, f"{prefix}{branch}.c3", n, c, 3, scale=0.1)
    _conv_init(store, rng, f"{prefix}att.c", n, 1, 3, scale=0.1)
    _conv_init(store, rng, f"{prefix}dil.c1", cfg.dilation_width, cfg.channels, 3)
    _conv_init(store, rng, f"{prefix}dil.c2", 1, cfg.dilation_width, 3, scale=0.1)
    f = cfg.feature_channels
    _conv_init(store, rng, f"{prefix}refine", f, f, 3, scale=0.5)


def conv(x, p, name, stride=1):
    return ops.conv2d(x, p(name + ".w"), p(name + ".b"), stride=stride)


# -- DIKP ------------------------------------------------------------------------------


def spectrum_planes(img):
    """fft-shifted log(1 + |F|) and principal phase of the channel-mean image."""
    luma = ops.mean(img, axis=1, keepdims=True)
    z = ops.fft2(luma)
    amp = ops.fftshift(ops.log1p(ops.complex_abs(z)))
    phase = ops.fftshift(ops.complex_angle(z))
    return amp, phase


def predictor_forward(plane, p, n, k):
    """(B, 1, H, W) plane -> (B, N, K, K) softmax-normalised maps."""
    b, _, h, w = plane.shape
    if h < k or w < k:
        raise ValueError(f"plane {h}x{w} smaller than kernel size {k}")
    x = ops.relu(conv(plane, p, "c1"))
    x = ops.adaptive_avg_pool(x, (max(k, -(-h // 2)), max(k, -(-w // 2))))
    x = ops.relu(conv(x, p, "c2"))
    x = ops.adaptive_avg_pool(x, (k, k))
    x = conv(x, p, "c3")
    x = ops.softmax(ops.reshape(x, (b, n, k * k)), axis=-1)
    return ops.reshape(x, (b, n, k, k))


def attention_forward(amp, p, n):
    """(B, 1, H, W) amplitude plane -> (B, N) per-kernel weights summing to 1."""
    resid = amp - ops.box_filter(amp, 5)
    x = ops.global_avg_pool(conv(resid, p, "c"))
    return ops.softmax(ops.reshape(x, (x.shape[0], n)), axis=-1)


def phase_map(t, weights, k):
    """Affine map pi*(2*K^2*t - 1) of the phase softmax, scaled by the attention weights."""
    return (t * (2.0 * math.pi * k * k) - math.pi) * ops.reshape(weights, weights.shape + (1, 1))


def kernels_from_polar(amp, phase):
    """Centred-layout |K_A|, K_P' -> (centred spatial kernels renormalised to sum 1, offsets)."""
    k = amp.shape[-1]
    spec = ops.from_polar(ops.ifftshift(amp), ops.ifftshift(phase))
    raw = ops.fftshift(ops.ifft2(spec)[0])
    offset = (1.0 - ops.sum(raw, axis=(-2, -1), keepdims=True)) / float(k * k)
    return raw + offset, offset


def dikp_predict(img, p, cfg, zero_phase=False):
    """Returns dict with graph nodes: kernels, amplitude, phase, offset, attention."""
    n, k = cfg.n_kernels, cfg.kernel_size
    amp, phase = spectrum_planes(img)
    ka = predictor_forward(amp, p.sub("amp"), n, k)
    att = attention_forward(amp, p.sub("att"), n)
    if zero_phase:
        kp = img.graph.constant(np.zeros(ka.shape))
    else:
        kp = phase_map(predictor_forward(phase, p.sub("phase"), n, k), att, k)
    kernels, offset = kernels_from_polar(ka, kp)
    return {"kernels": kernels, "amplitude": ka, "phase": kp, "offset": offset, "attention": att}


def dilated_map(img, p, cfg):
    x = ops.relu(conv(img, p, "c1"))
    s = ops.sigmoid(conv(x, p, "c2"))
    return s * (cfg.d_max - cfg.d_min) + cfg.d_min


# -- PAC -------------------------------------------------------------------------------


def pac_offsets(k):
    r = k // 2
    dy, dx = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    return dy.ravel().astype(float), dx.ravel().astype(float)


def pac_apply(img, kernels, dmap):
    """Position-adaptive correlation.

    img (B, C, H, W), kernels (B, N, K, K), dmap (B, 1, H, W) -> (B, N*C, H, W), with
    output channel n*C + c holding kernel n applied to colour channel c.
    """
    g = img.graph if hasattr(img, "graph") else kernels.graph
    b, c, h, w = img.shape
    n, k = kernels.shape[1], kernels.shape[-1]
    if dmap.shape[-2:] != (h, w):
        raise ValueError(f"dilated map {dmap.shape[-2:]} does not match image {(h, w)}")
    dy, dx = pac_offsets(k)
    dt = g.dtype
    py = np.arange(h, dtype=dt).reshape(1, 1, h, 1)
    px = np.arange(w, dtype=dt).reshape(1, 1, 1, w)
    ys = dmap * dy.astype(dt).reshape(1, -1, 1, 1) + np.broadcast_to(py, (1, 1, h, w))
    xs = dmap * dx.astype(dt).reshape(1, -1, 1, 1) + np.broadcast_to(px, (1, 1, h, w))
    samples = ops.grid_sample(img, ys, xs)                       # (B, S, C, H, W)
    flat = ops.reshape(samples, (b, k * k, c * h * w))
    out = ops.matmul(ops.reshape(kernels, (b, n, k * k)), flat)  # (B, N, C*H*W)
    return ops.reshape(out, (b, n * c, h, w))


def fikp_branch(img, p, cfg):
    g = img.graph
    b, _, h, w = img.shape
    if cfg.disable_dikp:
        bank = inverse_bank(cfg.n_kernels, cfg.kernel_size)
        kernels = g.constant(np.broadcast_to(bank, (b,) + bank.shape))
    else:
        kernels = dikp_predict(img, p, cfg)["kernels"]
    if cfg.disable_pac:
        dmap = g.constant(np.ones((b, 1, h, w)))
    else:
        dmap = dilated_map(img, p.sub("dil"), cfg)
    return pac_apply(img, kernels, dmap)


def fikp_forward(img, prev, p, cfg):
    """Deconvolution features F (B, 2*N*C, H, W) for the stage input and previous output."""
    if img.shape != prev.shape:
        raise ValueError(f"img {img.shape} and prev {prev.shape} differ")
    feats = ops.concat([fikp_branch(img, p, cfg), fikp_branch(prev, p, cfg)], axis=1)
    return conv(feats, p, "refine")


# -- array-level conveniences ----------------------------------------------------------


def predict_kernels(img, store, cfg, prefix="fikp."):
    """Run DIKP on a (C, H, W) array and return a numpy KernelSet plus the dilated map."""
    g = Graph(store.dtype)
    p = Scope(g, store, prefix)
    x = g.constant(np.asarray(img)[None])
    out = dikp_predict(x, p, cfg)
    dmap = dilated_map(x, p.sub("dil"), cfg)
    ks = KernelSet(out["kernels"].value[0].astype(float), out["amplitude"].value[0].astype(float),
                   out["phase"].value[0].astype(float), out["offset"].value[0, :, 0, 0].astype(float))
    return ks, dmap.value[0, 0].astype(float), out["attention"].value[0].astype(float)


def pac_apply_plane(plane, kernel, dmap):
    """Single plane, single kernel PAC on plain arrays."""
    g = Graph(np.float64)
    plane = np.asarray(plane, float)
    kernel = np.asarray(kernel, float)
    if kernel.shape[0] % 2 == 0 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError("kernel must be square with odd size")
    dmap = np.broadcast_to(np.asarray(dmap, float), plane.shape)
    out = pac_apply(g.constant(plane[None, None]), g.constant(kernel[None, None]), g.constant(dmap[None, None]))
    return out.value[0, 0]
