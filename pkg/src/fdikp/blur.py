"""Defocus point-spread functions and synthetic blurry/sharp pairs.

The degradation model is x = y (*) k with a disk-shaped k whose radius may vary per
pixel. Spatially varying blur uses the gather formulation: the radius stored at an
output pixel selects the kernel used to average its neighbourhood.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc


@dataclass
class BlurKernel:
    weights: np.ndarray

    @property
    def size(self):
        return self.weights.shape[0]


@dataclass
class SamplePair:
    sharp: np.ndarray
    blurry: np.ndarray
    radius: np.ndarray
    noise_sigma: float


@dataclass
class SynthConfig:
    seed: int = 0
    count: int = 20
    patch: int = 96
    radius_min: float = 1.0
    radius_max: float = 4.0
    noise_sigma: float = 0.002

    def validate(self):
        if self.radius_min > self.radius_max:
            raise ValueError(f"radius range inverted: {self.radius_min} > {self.radius_max}")
        if self.radius_min < 0:
            raise ValueError("radii must be nonnegative")
        if self.count < 0 or self.patch < 4:
            raise ValueError("count must be >= 0 and patch >= 4")


# -- disk coverage ---------------------------------------------------------------------


def _quadrant_area(a, b, r):
    """Area of the disk of radius r inside [0, a] x [0, b] for a, b >= 0."""
    a = np.minimum(a, r)
    b = np.minimum(b, r)
    inside = a * a + b * b <= r * r
    xc = np.sqrt(np.maximum(r * r - b * b, 0.0))
    rr = np.maximum(r, 1e-300)

    def prim(x):
        return 0.5 * (x * np.sqrt(np.maximum(r * r - x * x, 0.0)) + r * r * np.arcsin(np.clip(x / rr, -1, 1)))

    outside = b * xc + prim(a) - prim(xc)
    return np.where(inside, a * b, outside)


def _signed_area(x, y, r):
    return np.sign(x) * np.sign(y) * _quadrant_area(np.abs(x), np.abs(y), r)


def disk_coverage(r, dy, dx):
    """Exact area of the unit pixel centred at (dy, dx) covered by a disk of radius r."""
    y0, y1 = dy - 0.5, dy + 0.5
    x0, x1 = dx - 0.5, dx + 0.5
    return (_signed_area(x1, y1, r) - _signed_area(x0, y1, r)
            - _signed_area(x1, y0, r) + _signed_area(x0, y0, r))


def disk_size(radius):
    return 2 * int(math.ceil(radius)) + 1


def disk_kernel(radius):
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return BlurKernel(np.ones((1, 1)))
    k = disk_size(radius)
    c = np.arange(k) - k // 2
    w = disk_coverage(float(radius), c[:, None].astype(float), c[None, :].astype(float))
    w = np.maximum(w, 0.0)
    return BlurKernel(w / w.sum())


def gaussian_kernel(sigma, size):
    if size % 2 == 0 or size < 1:
        raise ValueError(f"size must be odd, got {size}")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    c = np.arange(size) - size // 2
    w = np.exp(-(c[:, None] ** 2 + c[None, :] ** 2) / (2.0 * sigma * sigma))
    return BlurKernel(w / w.sum())


# -- blurring --------------------------------------------------------------------------


def blur_uniform(img, kernel, boundary="reflect"):
    weights = kernel.weights if isinstance(kernel, BlurKernel) else np.asarray(kernel)
    return tc.conv2d_same(img, weights, boundary)


def blur_varying(img, radius_map):
    """Per-pixel disk blur (gather). Taps falling outside the image are dropped and the
    remaining weights renormalised."""
    img = np.asarray(img, dtype=float)
    radius_map = np.asarray(radius_map, dtype=float)
    if radius_map.shape != img.shape[-2:]:
        raise ValueError(f"radius map {radius_map.shape} does not match image {img.shape[-2:]}")
    h, w = radius_map.shape
    reach = int(math.ceil(radius_map.max())) if radius_map.size else 0
    out = np.zeros_like(img)
    norm = np.zeros((h, w))
    r = radius_map
    for dy in range(-reach, reach + 1):
        for dx in range(-reach, reach + 1):
            if dy == 0 and dx == 0:
                wt = np.where(r == 0, 1.0, disk_coverage(r, 0.0, 0.0))
            else:
                wt = np.where(r == 0, 0.0, np.maximum(disk_coverage(r, float(dy), float(dx)), 0.0))
            ys = slice(max(0, -dy), min(h, h - dy))
            xs = slice(max(0, -dx), min(w, w - dx))
            src_y = slice(max(0, dy), min(h, h + dy))
            src_x = slice(max(0, dx), min(w, w + dx))
            wv = wt[ys, xs]
            out[..., ys, xs] += wv * img[..., src_y, src_x]
            norm[ys, xs] += wv
    return out / norm


# -- procedural scenes -----------------------------------------------------------------


def _smooth_noise(rng, h, w, scale):
    gh, gw = max(2, h // scale + 2), max(2, w // scale + 2)
    coarse = rng.random((gh, gw))
    return tc.resize(coarse, (h, w))


def sharp_scene(rng, size):
    """Procedural RGB scene in [0, 1]: textured background, rectangles, ellipses, strokes."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    base = rng.random(3)
    tex = _smooth_noise(rng, h, w, int(rng.integers(4, 16)))
    img = base[:, None, None] * (0.6 + 0.4 * tex)[None]
    fine = rng.random((h, w))
    img += 0.08 * (fine - 0.5)[None]
    for _ in range(int(rng.integers(3, 8))):
        color = rng.random(3)
        kind = rng.integers(0, 3)
        if kind == 0:
            y0, x0 = rng.integers(0, h), rng.integers(0, w)
            hh, ww = rng.integers(4, h // 2), rng.integers(4, w // 2)
            mask = (yy >= y0) & (yy < y0 + hh) & (xx >= x0) & (xx < x0 + ww)
        elif kind == 1:
            cy, cx = rng.random() * h, rng.random() * w
            ry, rx = 3 + rng.random() * h / 4, 3 + rng.random() * w / 4
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        else:
            # text-like stroke: a thin band along a random line segment
            cy, cx = rng.random() * h, rng.random() * w
            ang = rng.random() * np.pi
            length = 8 + rng.random() * h / 2
            width = 0.8 + rng.random() * 1.5
            ux, uy = np.cos(ang), np.sin(ang)
            along = (xx - cx) * ux + (yy - cy) * uy
            across = -(xx - cx) * uy + (yy - cy) * ux
            mask = (np.abs(along) <= length / 2) & (np.abs(across) <= width)
        img[:, mask] = color[:, None]
    # checker texture patch for high-frequency content
    if rng.random() < 0.5:
        period = int(rng.integers(2, 6))
        y0, x0 = rng.integers(0, h // 2), rng.integers(0, w // 2)
        region = (yy >= y0) & (yy < y0 + h // 3) & (xx >= x0) & (xx < x0 + w // 3)
        checker = ((yy // period + xx // period) % 2).astype(float)
        img[:, region] = (0.2 + 0.6 * checker[region])[None] * rng.random(3)[:, None] + 0.1
    return np.clip(img, 0.0, 1.0)


def radius_field(rng, size, rmin, rmax):
    """Region-wise constant or smoothly ramped radius map within [rmin, rmax]."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    kind = rng.integers(0, 3)
    if kind == 0:
        r = np.full((h, w), rmin + rng.random() * (rmax - rmin))
    elif kind == 1:
        ang = rng.random() * 2 * np.pi
        t = (np.cos(ang) * xx + np.sin(ang) * yy)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
        a, b = rmin + rng.random(2) * (rmax - rmin)
        r = a + (b - a) * t
    else:
        a, b = rmin + rng.random(2) * (rmax - rmin)
        cy, cx = rng.random() * h, rng.random() * w
        rad = size * (0.2 + 0.3 * rng.random())
        r = np.where((yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad, a, b)
    return np.clip(r, rmin, rmax)


def make_pair(rng, cfg):
    y = sharp_scene(rng, cfg.patch)
    r = radius_field(rng, cfg.patch, cfg.radius_min, cfg.radius_max)
    x = blur_varying(y, r)
    if cfg.noise_sigma > 0:
        x = x + rng.normal(0.0, cfg.noise_sigma, size=x.shape)
    x = np.clip(x, 0.0, 1.0)
    return SamplePair(y, x, r, cfg.noise_sigma)


def synth_dataset(cfg):
    """Deterministic list of SamplePair; each sample draws from its own spawned seed."""
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.count)
    return [make_pair(np.random.default_rng(s), cfg) for s in seeds]


# -- dataset directories ---------------------------------------------------------------


def to_uint8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(path, img):
    from PIL import Image

    arr = to_uint8(img)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    Image.fromarray(arr).save(path, format="PNG")


def load_png(path):
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def write_dataset(out_dir, pairs, cfg):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(pairs):
        save_png(out / f"{i:04d}_sharp.png", p.sharp)
        save_png(out / f"{i:04d}_blur.png", p.blurry)
        tc.write_fdkt(out / f"{i:04d}_radius.fdkt", p.radius)
    manifest = {"seed": cfg.seed, "count": len(pairs), "config": asdict(cfg)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def read_dataset(path, limit=None):
    """Load (sharp, blurry) float pairs from a dataset directory, sorted by index."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} not found")
    sharps = sorted(root.glob("*_sharp.png"))
    if not sharps:
        raise FileNotFoundError(f"no *_sharp.png files in {root}")
    pairs = []
    for sp in sharps[:limit]:
        stem = sp.name[: -len("_sharp.png")]
        bp = root / f"{stem}_blur.png"
        if not bp.exists():
            raise FileNotFoundError(f"missing {bp}")
        rp = root / f"{stem}_radius.fdkt"
        radius = tc.read_fdkt(rp) if rp.exists() else None
        pairs.append(SamplePair(load_png(sp), load_png(bp), radius, float("nan")))
    return pairs
