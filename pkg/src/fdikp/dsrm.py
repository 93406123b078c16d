"""Dual-domain scale-recurrent module: encoder/decoder, bottleneck DDM and the APU cell.

The APU is a convolutional GRU. All DSRM weights are shared across the three scales.
"""

import math

import numpy as np

from .autodiff import ops
from .fikp import _conv_init, conv


def init_dsrm(store, rng, cfg, prefix="dsrm."):
    w0, w1, w2 = cfg.widths
    _conv_init(store, rng, prefix + "enc0.in", w0, cfg.channels, 3)
    _init_resblock(store, rng, prefix + "enc0.rb", w0)
    _conv_init(store, rng, prefix + "enc1.down", w1, w0, 3)
    _init_resblock(store, rng, prefix + "enc1.rb", w1)
    _conv_init(store, rng, prefix + "enc2.down", w2, w1, 3)
    _init_resblock(store, rng, prefix + "enc2.rb", w2)
    init_ddm(store, rng, w2, cfg.ddm_variant, prefix + "ddm.")
    _conv_init(store, rng, prefix + "dec1.fuse", w1, w2 + w1, 3)
    _init_resblock(store, rng, prefix + "dec1.rb", w1)
    _conv_init(store, rng, prefix + "dec0.fuse", w0, w1 + w0, 3)
    _init_resblock(store, rng, prefix + "dec0.rb", w0)
    init_apu(store, rng, w0, w0, cfg.feature_channels, prefix + "apu.")


def _init_resblock(store, rng, name, c):
    _conv_init(store, rng, name + ".c1", c, c, 3)
    _conv_init(store, rng, name + ".c2", c, c, 3, scale=0.1)


def init_ddm(store, rng, c, variant="full", prefix="ddm."):
    if variant in ("full", "spatial_only", "dual_branch"):
        for name in ("q", "k", "v"):
            _conv_init(store, rng, prefix + "att." + name, c, c, 1, scale=0.5)
        _conv_init(store, rng, prefix + "att.o", c, c, 1, scale=0.1)
    if variant in ("full", "frequency_only", "dual_branch"):
        _conv_init(store, rng, prefix + "freq.c1", 2 * c, 2 * c, 1)
        _conv_init(store, rng, prefix + "freq.c2", 2 * c, 2 * c, 1, scale=0.1)
        _init_resblock(store, rng, prefix + "rb", c)
    if variant == "dual_branch":
        _conv_init(store, rng, prefix + "gate", c, 2 * c, 1)


def init_apu(store, rng, c_feat, c_hidden, c_out, prefix="apu."):
    for gate in ("z", "r", "h"):
        _conv_init(store, rng, prefix + gate, c_hidden, c_feat + c_hidden, 3, scale=0.5)
    _conv_init(store, rng, prefix + "head", c_out, c_hidden, 3, scale=0.1)


# -- blocks ----------------------------------------------------------------------------


def resblock(x, p):
    return x + conv(ops.relu(conv(x, p, "c1")), p, "c2")


def window_attention(x, p, window=8):
    """Single-head self-attention inside non-overlapping windows, residual added."""
    b, c, h, w = x.shape
    wh, ww = min(window, h), min(window, w)
    ph, pw = (-h) % wh, (-w) % ww
    q, k, v = conv(x, p, "q"), conv(x, p, "k"), conv(x, p, "v")

    def to_windows(t):
        if ph or pw:
            t = ops.reflect_pad(t, (0, ph, 0, pw))
        hh, wwid = t.shape[-2:]
        t = ops.reshape(t, (b, c, hh // wh, wh, wwid // ww, ww))
        t = ops.transpose(t, (0, 2, 4, 3, 5, 1))
        return ops.reshape(t, (-1, wh * ww, c)), hh, wwid

    qw, hh, wwid = to_windows(q)
    kw, _, _ = to_windows(k)
    vw, _, _ = to_windows(v)
    att = ops.softmax(ops.matmul(qw, ops.transpose(kw, (0, 2, 1))) * (1.0 / math.sqrt(c)), axis=-1)
    y = ops.matmul(att, vw)
    y = ops.reshape(y, (b, hh // wh, wwid // ww, wh, ww, c))
    y = ops.transpose(y, (0, 5, 1, 3, 2, 4))
    y = ops.reshape(y, (b, c, hh, wwid))
    if ph or pw:
        y = y[:, :, :h, :w]
    return x + conv(y, p, "o")


def spectral_filter(x, filt):
    """FFT per channel -> filt on stacked (re, im) channels -> inverse FFT -> real part."""
    c = x.shape[1]
    z = ops.fft2(x)
    planes = ops.concat([z[0], z[1]], axis=1)
    planes = filt(planes)
    spec = ops.stack([planes[:, :c], planes[:, c:]], axis=0)
    return ops.ifft2(spec)[0]


def frequency_block(x, p):
    """Residual branch of the frequency stage (without the input)."""
    return spectral_filter(x, lambda t: conv(ops.relu(conv(t, p, "c1")), p, "c2"))


def frequency_stage(x, p):
    return x + frequency_block(x, p.sub("freq")) + (resblock(x, p.sub("rb")) - x)


def ddm(x, p, variant="full", window=8):
    if variant == "full":
        return frequency_stage(window_attention(x, p.sub("att"), window), p)
    if variant == "spatial_only":
        return window_attention(x, p.sub("att"), window)
    if variant == "frequency_only":
        return frequency_stage(x, p)
    if variant == "dual_branch":
        s = window_attention(x, p.sub("att"), window)
        f = frequency_stage(x, p)
        gate = ops.sigmoid(conv(ops.concat([s, f], axis=1), p, "gate"))
        return gate * s + (1.0 - gate) * f
    raise ValueError(f"unknown DDM variant {variant!r}")


def apu_step(features, hidden, p):
    """Convolutional GRU update followed by a sigmoid coefficient head.

    ``hidden`` may be None (zero state) and is resized to the feature resolution first.
    Returns (coefficient maps, new hidden state).
    """
    g = features.graph
    b, _, h, w = features.shape
    c_hidden = p.store[p.prefix + "z.w"].shape[0]
    if hidden is None:
        hidden = g.constant(np.zeros((b, c_hidden, h, w)))
    else:
        hidden = ops.resize(hidden, (h, w))
    if hidden.shape != (b, c_hidden, h, w):
        raise ValueError(f"hidden state {hidden.shape} incompatible with features {features.shape}")
    fh = ops.concat([features, hidden], axis=1)
    z = ops.sigmoid(conv(fh, p, "z"))
    r = ops.sigmoid(conv(fh, p, "r"))
    cand = ops.tanh(conv(ops.concat([features, r * hidden], axis=1), p, "h"))
    new_h = (1.0 - z) * hidden + z * cand
    coeff = ops.sigmoid(conv(new_h, p, "head"))
    return coeff, new_h


def dsrm_forward(img, hidden, p, cfg):
    """Stage input (B, C, H, W) -> (coefficient maps (B, 2NC, H, W), hidden state)."""
    e0 = resblock(conv(img, p, "enc0.in"), p.sub("enc0.rb"))
    e1 = resblock(conv(e0, p, "enc1.down", stride=2), p.sub("enc1.rb"))
    e2 = resblock(conv(e1, p, "enc2.down", stride=2), p.sub("enc2.rb"))
    bott = ddm(e2, p.sub("ddm"), cfg.ddm_variant, cfg.window)
    d1 = ops.concat([ops.resize(bott, e1.shape[-2:]), e1], axis=1)
    d1 = resblock(conv(d1, p, "dec1.fuse"), p.sub("dec1.rb"))
    d0 = ops.concat([ops.resize(d1, e0.shape[-2:]), e0], axis=1)
    d0 = resblock(conv(d0, p, "dec0.fuse"), p.sub("dec0.rb"))
    return apu_step(d0, hidden, p.sub("apu"))
