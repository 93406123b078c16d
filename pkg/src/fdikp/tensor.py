"""Dense-array primitives: FFT helpers, polar spectra, resampling, sampling, convolution.

Images are numpy arrays in (channel, height, width) order; single planes are 2-D.
The forward FFT is unnormalized and the inverse carries the 1/(H*W) factor.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

#: imaginary residue tolerated (and discarded) when a real inverse transform is demanded
IMAG_TOL = 1e-9

BOUNDARY_MODES = {"reflect": "reflect", "periodic": "wrap", "clamp": "edge"}


@dataclass
class PolarSpectrum:
    amplitude: np.ndarray
    phase: np.ndarray


def _check_plane(plane):
    plane = np.asarray(plane)
    if plane.ndim < 2 or plane.shape[-1] == 0 or plane.shape[-2] == 0:
        raise ValueError(f"expected a non-empty plane, got shape {plane.shape}")
    return plane


def fft2(plane):
    """Unnormalized 2-D DFT over the last two axes (any extents)."""
    plane = _check_plane(plane)
    return np.fft.fft2(plane, axes=(-2, -1))


def ifft2(spec, real=True, tol=IMAG_TOL):
    """Normalized inverse DFT.

    With ``real=True`` the imaginary residue must stay below ``tol`` relative to the
    magnitude of the result (absolute when the result is below 1); it is then dropped.
    """
    spec = _check_plane(spec)
    out = np.fft.ifft2(spec, axes=(-2, -1))
    if not real:
        return out
    scale = max(1.0, float(np.max(np.abs(out.real))) if out.size else 1.0)
    resid = float(np.max(np.abs(out.imag))) if out.size else 0.0
    if resid > tol * scale:
        raise ValueError(f"spectrum is not Hermitian: imaginary residue {resid:.3e}")
    return out.real.copy()


def to_polar(spec):
    amp = np.abs(spec)
    phase = np.angle(spec)
    phase = np.where(amp == 0, 0.0, phase)
    return PolarSpectrum(amp, phase)


def from_polar(polar):
    return polar.amplitude * np.exp(1j * polar.phase)


# -- separable linear resampling operators ---------------------------------------------
# Every resampler here is a pair of dense matrices (rows, cols) so that
# out = My @ plane @ Mx.T; the autodiff engine reuses them for exact adjoints.


def bilinear_matrix(n_in, n_out):
    """Corner-aligned bilinear interpolation with edge clamping, shape (n_out, n_in)."""
    if n_in < 1 or n_out < 1:
        raise ValueError("zero-extent resize")
    m = np.zeros((n_out, n_in))
    if n_out == 1 or n_in == 1:
        src = np.zeros(n_out)
    else:
        src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    i0 = np.clip(np.floor(src).astype(int), 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    return m


def reflect_pad_matrix(n, before, after):
    """Selection matrix implementing numpy 'reflect' padding along one axis."""
    idx = np.pad(np.arange(n), (before, after), mode="reflect")
    m = np.zeros((n + before + after, n))
    m[np.arange(idx.size), idx] = 1.0
    return m


def adaptive_pool_matrix(n_in, n_out):
    """Adaptive average pooling bins: [floor(i*n/o), ceil((i+1)*n/o))."""
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        a = (i * n_in) // n_out
        b = -(-((i + 1) * n_in) // n_out)
        m[i, a:b] = 1.0 / (b - a)
    return m


def box_matrix(n, size):
    """Centered moving average of odd ``size`` with reflect boundary."""
    r = size // 2
    pad = reflect_pad_matrix(n, r, r)
    m = np.zeros((n, n))
    for k in range(size):
        m += pad[k:k + n]
    return m / size


def apply_separable(img, my, mx):
    return np.matmul(np.matmul(my, img), mx.T)


def _even_pad(img):
    img = np.asarray(img, dtype=float)
    h, w = img.shape[-2:]
    pads = [(0, 0)] * (img.ndim - 2) + [(0, h % 2), (0, w % 2)]
    if h % 2 or w % 2:
        img = np.pad(img, pads, mode="reflect" if min(h, w) > 1 else "edge")
    return img


def resize(img, out_hw):
    img = np.asarray(img, dtype=float)
    h, w = img.shape[-2:]
    if h == 0 or w == 0:
        raise ValueError("zero-extent input")
    return apply_separable(img, bilinear_matrix(h, out_hw[0]), bilinear_matrix(w, out_hw[1]))


def resize_half(img):
    img = np.asarray(img, dtype=float)
    if 0 in img.shape[-2:]:
        raise ValueError("zero-extent input")
    img = _even_pad(img)
    h, w = img.shape[-2:]
    return resize(img, (h // 2, w // 2))


def resize_double(img):
    img = np.asarray(img, dtype=float)
    h, w = img.shape[-2:]
    return resize(img, (2 * h, 2 * w))


# -- bilinear sampling -----------------------------------------------------------------


def bilinear_taps(ys, xs, h, w):
    """Corner indices and weights for clamped bilinear sampling.

    Returns (y0, y1, x0, x1, fy, fx, inside_y, inside_x); the inside masks flag
    coordinates that were not clamped (their coordinate gradient is kept).
    """
    yc = np.clip(ys, 0, h - 1)
    xc = np.clip(xs, 0, w - 1)
    y0 = np.floor(yc).astype(np.intp)
    x0 = np.floor(xc).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = yc - y0
    fx = xc - x0
    inside_y = (ys >= 0) & (ys <= h - 1)
    inside_x = (xs >= 0) & (xs <= w - 1)
    return y0, y1, x0, x1, fy, fx, inside_y, inside_x


def sample_bilinear_grid(plane, ys, xs):
    plane = np.asarray(plane, dtype=float)
    h, w = plane.shape
    y0, y1, x0, x1, fy, fx, _, _ = bilinear_taps(np.asarray(ys, float), np.asarray(xs, float), h, w)
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def sample_bilinear(plane, yx):
    """Bilinear value of ``plane`` at fractional (y, x); out-of-range coordinates clamp."""
    return float(sample_bilinear_grid(plane, np.array(yx[0]), np.array(yx[1])))


# -- spatial convolution ---------------------------------------------------------------


def conv2d_same(img, kernel, boundary="reflect"):
    """True 2-D convolution (kernel flipped), same-size output, per channel."""
    kernel = np.asarray(kernel, dtype=float)
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kernel.shape}")
    if boundary not in BOUNDARY_MODES:
        raise ValueError(f"unknown boundary {boundary!r}")
    img = np.asarray(img, dtype=float)
    ry, rx = kh // 2, kw // 2
    pads = [(0, 0)] * (img.ndim - 2) + [(ry, ry), (rx, rx)]
    padded = np.pad(img, pads, mode=BOUNDARY_MODES[boundary])
    windows = sliding_window_view(padded, (kh, kw), axis=(-2, -1))
    return np.tensordot(windows, kernel[::-1, ::-1], axes=([-2, -1], [0, 1]))


def embed_centered(kernel, shape):
    """Zero-embed a centered odd kernel into ``shape`` with its center at index (0, 0)."""
    kernel = np.asarray(kernel, dtype=float)
    kh, kw = kernel.shape
    if kh > shape[0] or kw > shape[1]:
        raise ValueError("kernel larger than target grid")
    grid = np.zeros(shape)
    grid[:kh, :kw] = kernel
    return np.roll(grid, (-(kh // 2), -(kw // 2)), axis=(0, 1))


# -- raw tensor files ------------------------------------------------------------------

FDKT_MAGIC = b"FDKT"
FDKT_VERSION = 1


def write_fdkt(path, array):
    array = np.asarray(array, dtype="<f4", order="C")
    with open(path, "wb") as fh:
        fh.write(FDKT_MAGIC)
        fh.write(struct.pack("<BB", FDKT_VERSION, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def read_fdkt(path):
    data = Path(path).read_bytes()
    if data[:4] != FDKT_MAGIC:
        raise ValueError(f"{path}: not an FDKT file")
    version, rank = struct.unpack_from("<BB", data, 4)
    if version != FDKT_VERSION:
        raise ValueError(f"{path}: unsupported FDKT version {version}")
    shape = struct.unpack_from(f"<{rank}I", data, 6)
    offset = 6 + 4 * rank
    count = int(np.prod(shape)) if rank else 1
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    return arr.reshape(shape).astype(np.float32)
