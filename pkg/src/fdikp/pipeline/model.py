"""Three-stage scale-recurrent FDIKP forward pass."""

import numpy as np

from .. import tensor as tc
from ..autodiff import Graph, ParamStore, Scope, ops
from ..config import ModelConfig
from ..dsrm import dsrm_forward, init_dsrm
from ..fikp import _conv_init, conv, fikp_forward, init_fikp


def init_model(cfg, seed=0, dtype=np.float32):
    """Fresh parameters; the fusion convolution starts at zero so the model is the identity."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore(np.float64)
    init_fikp(store, rng, cfg)
    init_dsrm(store, rng, cfg)
    _conv_init(store, rng, "fuse", cfg.channels, cfg.feature_channels, 1, zero=True)
    return store.copy(dtype)


def stage_inputs(x):
    """(B, C, H, W) array -> [x_1/4, x_1/2, x]."""
    half = tc.resize_half(x)
    return [tc.resize_half(half), half, np.asarray(x, dtype=float)]


def fdikp_forward(graph, x, store, cfg, return_stages=False):
    """Run the model on a batch array x (B, C, H, W) in [0, 1].

    Returns graph nodes (y_full, y_half, y_quarter); with ``return_stages`` also a list of
    per-stage dicts holding F, C and the hidden state.
    """
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    h, w = x.shape[-2:]
    if h % 4 or w % 4:
        raise ValueError(f"spatial extents must be divisible by 4, got {(h, w)}")
    inputs = [graph.constant(s) for s in stage_inputs(x)]
    if cfg.identity:
        outs = inputs[::-1]
        return (tuple(outs), []) if return_stages else tuple(outs)
    p = Scope(graph, store)
    fikp_p, dsrm_p = p.sub("fikp"), p.sub("dsrm")
    hidden = None
    prev_out = None
    stages = []
    outputs = []
    for xs in inputs:
        prev = xs if prev_out is None else ops.resize(prev_out, xs.shape[-2:])
        feats = fikp_forward(xs, prev, fikp_p, cfg)
        coeff, hidden = dsrm_forward(xs, hidden, dsrm_p, cfg)
        y = conv(coeff * feats, p, "fuse") + xs
        outputs.append(y)
        stages.append({"F": feats, "C": coeff, "hidden": hidden, "y": y})
        prev_out = y
    outs = (outputs[2], outputs[1], outputs[0])
    return (outs, stages) if return_stages else outs


def deblur(img, store, cfg):
    """Deblur one (C, H, W) image; pads to a multiple of 16 by reflection and crops back."""
    img = np.asarray(img, dtype=float)
    if cfg.identity:
        return np.clip(img, 0.0, 1.0)
    c, h, w = img.shape
    ph, pw = (-h) % 16, (-w) % 16
    padded = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="reflect") if (ph or pw) else img
    g = Graph(store.dtype if store is not None else np.float64)
    y = fdikp_forward(g, padded[None], store, cfg)[0].value[0]
    return np.clip(y[:, :h, :w].astype(float), 0.0, 1.0)
