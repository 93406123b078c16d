"""Module-level finite-difference checks on a small double-precision configuration."""

import numpy as np

from ..autodiff import ParamStore, Scope, grad_check, ops
from ..config import ModelConfig
from ..dsrm import dsrm_forward, init_dsrm
from ..fikp import fikp_forward, init_fikp
from ..losses import LossWeights, multiscale_loss_node
from .model import fdikp_forward, init_model, stage_inputs

# K = N = 3 keeps the 4x4 quarter-scale plane of a 16x16 input at least one kernel wide
TOY = ModelConfig(n_kernels=3, kernel_size=3, widths=(8, 12, 16), predictor_width=8, dilation_width=8)


def _jitter(store, rng, scale=0.1):
    # zero-initialised layers would hide their gradients
    for n in store.names():
        store.params[n] = store.params[n] + rng.normal(0.0, scale, store.params[n].shape)
    return store


def _probe(rng, shape):
    return rng.normal(size=shape)


def check_fikp(cfg=TOY, size=16, seed=0, n_samples=96, tol=1e-3):
    rng = np.random.default_rng(seed)
    store = ParamStore(np.float64)
    init_fikp(store, rng, cfg)
    _jitter(store, rng)
    x = rng.random((1, cfg.channels, size, size))
    prev = rng.random(x.shape)
    w = _probe(rng, (1, cfg.feature_channels, size, size))

    def fwd(g, params, inp):
        out = fikp_forward(g.constant(inp[0]), g.constant(inp[1]), Scope(g, params, "fikp."), cfg)
        return ops.sum(out * g.constant(w))

    return grad_check(fwd, store, (x, prev), tol=tol, n_samples=n_samples, seed=seed, name="fikp")


def check_dsrm(cfg=TOY, size=16, seed=0, n_samples=96, tol=1e-3):
    rng = np.random.default_rng(seed)
    store = ParamStore(np.float64)
    init_dsrm(store, rng, cfg)
    _jitter(store, rng)
    x = rng.random((1, cfg.channels, size, size))
    h0 = rng.normal(0, 0.5, (1, cfg.widths[0], size // 2, size // 2))
    wc = _probe(rng, (1, cfg.feature_channels, size, size))
    wh = _probe(rng, (1, cfg.widths[0], size, size))

    def fwd(g, params, inp):
        coeff, hidden = dsrm_forward(g.constant(inp[0]), g.constant(inp[1]), Scope(g, params, "dsrm."), cfg)
        return ops.sum(coeff * g.constant(wc)) + ops.sum(hidden * g.constant(wh))

    return grad_check(fwd, store, (x, h0), tol=tol, n_samples=n_samples, seed=seed, name="dsrm")


def check_losses(size=16, seed=0, tol=1e-3):
    rng = np.random.default_rng(seed)
    store = ParamStore(np.float64)
    y = rng.random((1, 3, size, size))
    targets = stage_inputs(y)[::-1]
    for tag, t in zip(("y1", "y2", "y4"), targets):
        store.add(tag, t + rng.normal(0, 0.05, t.shape))
    w = LossWeights()

    def fwd(g, params, inp):
        outs = [g.param(params, k) for k in ("y1", "y2", "y4")]
        return multiscale_loss_node([g.constant(t) for t in targets], outs, w)[0]

    return grad_check(fwd, store, None, tol=tol, n_samples=64, seed=seed, name="losses")


def check_full(cfg=TOY, size=16, seed=0, n_samples=200, tol=1e-3):
    rng = np.random.default_rng(seed)
    store = _jitter(init_model(cfg, seed=seed, dtype=np.float64), rng)
    x = rng.random((1, cfg.channels, size, size))
    targets = stage_inputs(rng.random(x.shape))[::-1]
    w = LossWeights()

    def fwd(g, params, inp):
        outs = fdikp_forward(g, inp, params, cfg)
        return multiscale_loss_node([g.constant(t) for t in targets], outs, w)[0]

    return grad_check(fwd, store, x, tol=tol, n_samples=n_samples, seed=seed, name="fdikp_forward")


CHECKS = {"fikp": check_fikp, "dsrm": check_dsrm, "losses": check_losses, "full": check_full}


def run_all(names=None, seed=0):
    return [CHECKS[n](seed=seed) for n in (names or list(CHECKS))]
