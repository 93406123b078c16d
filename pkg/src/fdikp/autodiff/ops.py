"""Differentiable operators on graph nodes.

Complex quantities are carried as paired real planes stacked on a new leading
axis: ``z.value[0]`` is the real part, ``z.value[1]`` the imaginary part.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import tensor as tc
from .graph import SUPPORTED_OPS, Node


def _register(*tags):
    for t in tags:
        SUPPORTED_OPS[t] = True


_register(
    "add", "sub", "mul", "div", "relu", "sigmoid", "tanh", "exp", "log1p", "abs", "power",
    "sum", "mean", "softmax", "reshape", "transpose", "getitem", "concat", "stack", "matmul",
    "conv2d", "separable", "roll", "fft2", "ifft2", "complex_abs", "complex_angle",
    "from_polar", "grid_sample",
)


def _graph_of(*items):
    for it in items:
        if isinstance(it, Node):
            return it.graph
    raise TypeError("at least one operand must be a graph node")


def _lift(graph, x):
    return x if isinstance(x, Node) else graph.constant(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------------------


def add(a, b):
    g = _graph_of(a, b)
    a, b = _lift(g, a), _lift(g, b)
    return g.node(a.value + b.value, (a, b),
                  lambda gr: (_unbroadcast(gr, a.shape), _unbroadcast(gr, b.shape)), "add")


def sub(a, b):
    g = _graph_of(a, b)
    a, b = _lift(g, a), _lift(g, b)
    return g.node(a.value - b.value, (a, b),
                  lambda gr: (_unbroadcast(gr, a.shape), _unbroadcast(-gr, b.shape)), "sub")


def mul(a, b):
    g = _graph_of(a, b)
    a, b = _lift(g, a), _lift(g, b)

    def bw(gr):
        ga = _unbroadcast(gr * b.value, a.shape) if a.requires_grad else None
        gb = _unbroadcast(gr * a.value, b.shape) if b.requires_grad else None
        return ga, gb

    return g.node(a.value * b.value, (a, b), bw, "mul")


def div(a, b):
    g = _graph_of(a, b)
    a, b = _lift(g, a), _lift(g, b)
    out = a.value / b.value

    def bw(gr):
        ga = _unbroadcast(gr / b.value, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-gr * out / b.value, b.shape) if b.requires_grad else None
        return ga, gb

    return g.node(out, (a, b), bw, "div")


def relu(x):
    mask = x.value > 0
    return x.graph.node(x.value * mask, (x,), lambda gr: (gr * mask,), "relu")


def sigmoid(x):
    out = 0.5 * (np.tanh(0.5 * x.value) + 1.0)
    return x.graph.node(out, (x,), lambda gr: (gr * out * (1 - out),), "sigmoid")


def tanh(x):
    out = np.tanh(x.value)
    return x.graph.node(out, (x,), lambda gr: (gr * (1 - out * out),), "tanh")


def exp(x):
    out = np.exp(x.value)
    return x.graph.node(out, (x,), lambda gr: (gr * out,), "exp")


def log1p(x):
    return x.graph.node(np.log1p(x.value), (x,), lambda gr: (gr / (1 + x.value),), "log1p")


def abs(x):  # noqa: A001 - mirrors numpy naming
    return x.graph.node(np.abs(x.value), (x,), lambda gr: (gr * np.sign(x.value),), "abs")


def power(x, p):
    out = x.value ** p
    return x.graph.node(out, (x,), lambda gr: (gr * p * x.value ** (p - 1),), "power")


def square(x):
    return power(x, 2)


# -- reductions ------------------------------------------------------------------------


def _expand(gr, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(gr, shape)
    if not keepdims:
        axes = (axis,) if np.isscalar(axis) else axis
        axes = tuple(a % len(shape) for a in axes)
        gr = np.expand_dims(gr, axes)
    return np.broadcast_to(gr, shape)


def sum(x, axis=None, keepdims=False):  # noqa: A001
    out = np.sum(x.value, axis=axis, keepdims=keepdims)
    return x.graph.node(np.asarray(out), (x,),
                        lambda gr: (np.array(_expand(gr, x.shape, axis, keepdims)),), "sum")


def mean(x, axis=None, keepdims=False):
    out = np.mean(x.value, axis=axis, keepdims=keepdims)
    count = x.value.size // max(np.asarray(out).size, 1)
    return x.graph.node(np.asarray(out), (x,),
                        lambda gr: (np.array(_expand(gr, x.shape, axis, keepdims)) / count,), "mean")


def softmax(x, axis=-1):
    z = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(gr):
        return (out * (gr - (gr * out).sum(axis=axis, keepdims=True)),)

    return x.graph.node(out, (x,), bw, "softmax")


# -- shape manipulation ----------------------------------------------------------------


def reshape(x, shape):
    return x.graph.node(x.value.reshape(shape), (x,), lambda gr: (gr.reshape(x.shape),), "reshape")


def transpose(x, axes):
    inv = np.argsort(axes)
    return x.graph.node(x.value.transpose(axes), (x,),
                        lambda gr: (gr.transpose(inv),), "transpose")


def getitem(x, index):
    def bw(gr):
        full = np.zeros_like(x.value)
        full[index] = gr
        return (full,)

    return x.graph.node(np.array(x.value[index]), (x,), bw, "getitem")


def concat(nodes, axis=0):
    g = _graph_of(*nodes)
    nodes = [_lift(g, n) for n in nodes]
    sizes = [n.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def bw(gr):
        return tuple(np.split(gr, splits, axis=axis))

    return g.node(np.concatenate([n.value for n in nodes], axis=axis), nodes, bw, "concat")


def stack(nodes, axis=0):
    g = _graph_of(*nodes)
    nodes = [_lift(g, n) for n in nodes]

    def bw(gr):
        return tuple(np.take(gr, i, axis=axis) for i in range(len(nodes)))

    return g.node(np.stack([n.value for n in nodes], axis=axis), nodes, bw, "stack")


def matmul(a, b):
    g = _graph_of(a, b)
    a, b = _lift(g, a), _lift(g, b)

    def bw(gr):
        ga = _unbroadcast(gr @ np.swapaxes(b.value, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ gr, b.shape) if b.requires_grad else None
        return ga, gb

    return g.node(a.value @ b.value, (a, b), bw, "matmul")


def roll(x, shift, axes=(-2, -1)):
    neg = tuple(-s for s in shift)
    return x.graph.node(np.roll(x.value, shift, axis=axes), (x,),
                        lambda gr: (np.roll(gr, neg, axis=axes),), "roll")


def fftshift(x):
    h, w = x.shape[-2:]
    return roll(x, (h // 2, w // 2))


def ifftshift(x):
    h, w = x.shape[-2:]
    return roll(x, (-(h // 2), -(w // 2)))


# -- convolution and resampling --------------------------------------------------------


def _conv_forward(xp, w, stride):
    kh, kw = w.shape[-2:]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return out.transpose(0, 3, 1, 2), win


def conv2d(x, w, b=None, stride=1):
    """Zero-padded 'same' cross-correlation, NCHW input, OIHW weights."""
    g = _graph_of(x, w)
    x, w = _lift(g, x), _lift(g, w)
    kh, kw = w.shape[-2:]
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"channel mismatch: input {x.shape[1]}, weight {w.shape[1]}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.value, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out, win = _conv_forward(xp, w.value, stride)
    parents = [x, w]
    if b is not None:
        b = _lift(g, b)
        out = out + b.value.reshape(1, -1, 1, 1)
        parents.append(b)
    ho, wo = out.shape[-2:]

    def bw(gr):
        gx = gw = gb = None
        if w.requires_grad:
            gw = np.tensordot(gr, win, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            if stride == 1:
                gp = np.pad(gr, ((0, 0), (0, 0), (kh - 1 - ph, kh - 1 - ph), (kw - 1 - pw, kw - 1 - pw)))
                wt = w.value.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
                gx, _ = _conv_forward(gp, np.ascontiguousarray(wt), 1)
            else:
                gxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        contrib = np.tensordot(w.value[:, :, i, j], gr, axes=([0], [1]))
                        gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += \
                            contrib.transpose(1, 0, 2, 3)
                gx = gxp[:, :, ph:ph + x.shape[2], pw:pw + x.shape[3]]
        if b is not None:
            gb = gr.sum(axis=(0, 2, 3)) if b.requires_grad else None
            return gx, gw, gb
        return gx, gw

    return g.node(out, parents, bw, "conv2d")


def separable(x, my, mx):
    """Apply fixed matrices along the last two axes: out = My @ x @ Mx^T."""
    my = np.asarray(my, dtype=x.value.dtype)
    mx = np.asarray(mx, dtype=x.value.dtype)
    out = np.matmul(np.matmul(my, x.value), mx.T)
    return x.graph.node(out, (x,), lambda gr: (np.matmul(np.matmul(my.T, gr), mx),), "separable")


def resize(x, out_hw):
    h, w = x.shape[-2:]
    if (h, w) == tuple(out_hw):
        return x
    return separable(x, tc.bilinear_matrix(h, out_hw[0]), tc.bilinear_matrix(w, out_hw[1]))


def resize_half(x):
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        x = separable(x, tc.reflect_pad_matrix(h, 0, h % 2), tc.reflect_pad_matrix(w, 0, w % 2))
        h, w = x.shape[-2:]
    return resize(x, (h // 2, w // 2))


def resize_double(x):
    h, w = x.shape[-2:]
    return resize(x, (2 * h, 2 * w))


def adaptive_avg_pool(x, out_hw):
    h, w = x.shape[-2:]
    return separable(x, tc.adaptive_pool_matrix(h, out_hw[0]), tc.adaptive_pool_matrix(w, out_hw[1]))


def global_avg_pool(x):
    return mean(x, axis=(-2, -1), keepdims=True)


def reflect_pad(x, pads):
    """pads = (top, bottom, left, right)."""
    h, w = x.shape[-2:]
    return separable(x, tc.reflect_pad_matrix(h, pads[0], pads[1]), tc.reflect_pad_matrix(w, pads[2], pads[3]))


def box_filter(x, size):
    h, w = x.shape[-2:]
    return separable(x, tc.box_matrix(h, size), tc.box_matrix(w, size))


# -- spectral ops ----------------------------------------------------------------------


def fft2(x):
    """Real tensor -> paired (re, im) spectrum over the last two axes."""
    f = np.fft.fft2(x.value, axes=(-2, -1))
    n = x.shape[-1] * x.shape[-2]
    out = np.stack([f.real, f.imag]).astype(x.value.dtype)

    def bw(gr):
        gc = gr[0] + 1j * gr[1]
        return ((np.fft.ifft2(gc, axes=(-2, -1)) * n).real.astype(x.value.dtype),)

    return x.graph.node(out, (x,), bw, "fft2")


def ifft2(z):
    """Paired spectrum -> paired normalized inverse transform."""
    zc = z.value[0] + 1j * z.value[1]
    f = np.fft.ifft2(zc, axes=(-2, -1))
    n = z.shape[-1] * z.shape[-2]
    dt = z.value.dtype

    def bw(gr):
        gz = np.fft.fft2(gr[0] + 1j * gr[1], axes=(-2, -1)) / n
        return (np.stack([gz.real, gz.imag]).astype(dt),)

    return z.graph.node(np.stack([f.real, f.imag]).astype(dt), (z,), bw, "ifft2")


def complex_abs(z):
    re, im = z.value[0], z.value[1]
    a = np.sqrt(re * re + im * im)
    safe = np.where(a > 0, a, 1.0)

    def bw(gr):
        s = np.where(a > 0, gr / safe, 0.0)
        return (np.stack([s * re, s * im]),)

    return z.graph.node(a, (z,), bw, "complex_abs")


def complex_angle(z):
    re, im = z.value[0], z.value[1] + 0.0  # +0.0 folds -0.0 so real-axis bins read +pi
    a2 = re * re + im * im
    theta = np.where(a2 > 0, np.arctan2(im, re), 0.0)
    safe = np.where(a2 > 0, a2, 1.0)

    def bw(gr):
        s = np.where(a2 > 0, gr / safe, 0.0)
        return (np.stack([-s * im, s * re]),)

    return z.graph.node(theta, (z,), bw, "complex_angle")


def from_polar(amp, phase):
    g = _graph_of(amp, phase)
    amp, phase = _lift(g, amp), _lift(g, phase)
    c, s = np.cos(phase.value), np.sin(phase.value)
    a = amp.value

    def bw(gr):
        ga = gr[0] * c + gr[1] * s
        gp = a * (gr[1] * c - gr[0] * s)
        return _unbroadcast(ga, amp.shape), _unbroadcast(gp, phase.shape)

    return g.node(np.stack([a * c, a * s]), (amp, phase), bw, "from_polar")


# -- bilinear sampling -----------------------------------------------------------------


def grid_sample(x, ys, xs):
    """Clamped bilinear gather.

    x: (B, C, H, W); ys, xs: (B, S, Ho, Wo) pixel coordinates.
    Returns (B, S, C, Ho, Wo). Coordinate gradients are zero where the coordinate
    was clamped to the border.
    """
    g = _graph_of(x, ys, xs)
    x, ys, xs = _lift(g, x), _lift(g, ys), _lift(g, xs)
    bsz, ch, h, w = x.shape
    _, s, ho, wo = ys.shape
    y0, y1, x0, x1, fy, fx, in_y, in_x = tc.bilinear_taps(ys.value, xs.value, h, w)
    dt = x.value.dtype
    fy = fy.astype(dt)[:, None]
    fx = fx.astype(dt)[:, None]
    flat = x.value.reshape(bsz, ch, h * w)
    idx = [(y0 * w + x0), (y0 * w + x1), (y1 * w + x0), (y1 * w + x1)]
    vals = []
    for ix in idx:
        v = np.take_along_axis(flat, ix.reshape(bsz, 1, -1), axis=2)
        vals.append(v.reshape(bsz, ch, s, ho, wo))
    v00, v01, v10, v11 = vals
    wts = [(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx]
    out = v00 * wts[0] + v01 * wts[1] + v10 * wts[2] + v11 * wts[3]

    def bw(gr):
        gr = gr.transpose(0, 2, 1, 3, 4)
        gx = gy_ = gx_ = None
        if x.requires_grad:
            base = (np.arange(bsz * ch).reshape(bsz, ch, 1) * (h * w))
            acc = np.zeros(bsz * ch * h * w)
            for ix, wt in zip(idx, wts):
                full = base + ix.reshape(bsz, 1, -1)
                acc += np.bincount(full.ravel(), weights=(gr * wt).ravel(), minlength=acc.size)
            gx = acc.reshape(x.shape).astype(dt)
        if ys.requires_grad:
            dy = (v10 - v00) * (1 - fx) + (v11 - v01) * fx
            gy_ = (gr * dy).sum(axis=1) * in_y
        if xs.requires_grad:
            dx = (v01 - v00) * (1 - fy) + (v11 - v10) * fy
            gx_ = (gr * dx).sum(axis=1) * in_x
        return gx, gy_, gx_

    return g.node(out.transpose(0, 2, 1, 3, 4), (x, ys, xs), bw, "grid_sample")
