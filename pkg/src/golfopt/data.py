"""Blur degradation ``y = x * k + n`` and training-pair construction.

Images are (H, W, 3) float arrays in [0, 1]. Batches handed to the networks
are (N, 3, H, W); see :func:`to_batch`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .fileio import PPMFormatError, read_ppm


class DataError(Exception):
    """Bad or inconsistent image data on disk."""


@dataclass
class DatasetSpec:
    source: str = "synthetic"  # or "paired-directory"
    patch: int = 64
    count: int = 500
    noise_sigma: float = 0.01
    gauss_sigma: tuple[float, float] = (0.8, 2.0)
    motion_length: tuple[int, int] = (3, 9)
    motion_fraction: float = 0.5
    seed: int = 0
    sharp_dir: str | None = None
    blur_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> DatasetSpec:
        d = dict(d)
        for key in ("gauss_sigma", "motion_length"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class Pair:
    sharp: np.ndarray
    blur: np.ndarray
    info: dict = field(default_factory=dict)


# -- kernels -----------------------------------------------------------------
def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r = np.arange(size) - size // 2
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def motion_kernel(length: float, angle: float) -> np.ndarray:
    """Anti-aliased line of ``length`` pixels through the centre (bilinear splatting)."""
    if length < 1:
        raise ValueError(f"motion length must be >= 1, got {length}")
    angle = angle % math.pi
    half = (length - 1) / 2.0
    radius = int(math.ceil(half))
    size = 2 * radius + 1
    k = np.zeros((size, size))
    steps = max(2, int(math.ceil(length * 16)))
    ts = np.linspace(-half, half, steps) if half > 0 else np.zeros(1)
    xs = radius + ts * math.cos(angle)
    ys = radius - ts * math.sin(angle)
    for x, y in zip(xs, ys):
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                w = wx * wy
                if w > 0:
                    k[y0 + dy, x0 + dx] += w
    return k / k.sum()


def random_kernel(spec: DatasetSpec, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    if rng.random() < spec.motion_fraction:
        length = int(rng.integers(spec.motion_length[0], spec.motion_length[1] + 1))
        angle = float(rng.uniform(0.0, math.pi))
        return motion_kernel(length, angle), {"kind": "motion", "length": length, "angle": angle}
    sigma = float(rng.uniform(*spec.gauss_sigma))
    size = 2 * int(math.ceil(3 * sigma)) + 1
    return gaussian_kernel(size, sigma), {"kind": "gaussian", "sigma": sigma, "size": size}


# -- degradation -------------------------------------------------------------
def convolve(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """True 2-D convolution of each channel with ``k``, zero padded, same size, unclamped."""
    x = np.asarray(x, dtype=np.float64)
    kh, kw = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {k.shape}")
    if kh != kw:
        raise ValueError(f"kernel must be square, got {k.shape}")
    planes = T.Tensor(x.transpose(2, 0, 1)[:, None])  # (3, 1, H, W): channels as batch
    flipped = T.Tensor(np.ascontiguousarray(k[::-1, ::-1])[None, None])
    with T.no_grad():
        out = T.conv2d(planes, flipped, pad=kh // 2)
    return out.data[:, 0].transpose(1, 2, 0)


def degrade(x: np.ndarray, k: np.ndarray, noise_sigma: float, rng: np.random.Generator | None = None) -> np.ndarray:
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    y = convolve(x, k)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_sigma > 0")
        y = y + rng.normal(0.0, noise_sigma, size=y.shape)
    return np.clip(y, 0.0, 1.0)


# -- synthetic sharp images --------------------------------------------------
def _grid(h: int, w: int):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return yy / max(h - 1, 1), xx / max(w - 1, 1)


def synth_sharp(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Procedural scene: gradient background, polygons, discs, checker patches and strokes."""
    h = w = spec.patch
    yy, xx = _grid(h, w)
    c0, c1 = rng.random(3), rng.random(3)
    theta = rng.uniform(0, 2 * math.pi)
    t = np.clip(0.5 + 0.7 * ((xx - 0.5) * math.cos(theta) + (yy - 0.5) * math.sin(theta)), 0, 1)
    img = c0 * (1 - t[..., None]) + c1 * t[..., None]

    for _ in range(int(rng.integers(3, 8))):
        kind = rng.integers(0, 4)
        colour = rng.random(3)
        if kind == 0:  # convex polygon from half-planes around a centre
            cy, cx = rng.random(2)
            rad = rng.uniform(0.1, 0.35)
            n = int(rng.integers(3, 7))
            angles = np.sort(rng.uniform(0, 2 * math.pi, n))
            mask = np.ones((h, w), bool)
            for a in angles:
                nx, ny = math.cos(a), math.sin(a)
                mask &= (xx - cx) * nx + (yy - cy) * ny <= rad
        elif kind == 1:  # disc
            cy, cx = rng.random(2)
            rad = rng.uniform(0.05, 0.25)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= rad * rad
        elif kind == 2:  # checkerboard patch
            y0, x0 = rng.uniform(0, 0.6, 2)
            y1, x1 = y0 + rng.uniform(0.2, 0.4), x0 + rng.uniform(0.2, 0.4)
            cell = rng.uniform(0.04, 0.12)
            inside = (yy >= y0) & (yy < y1) & (xx >= x0) & (xx < x1)
            mask = inside & ((np.floor((xx - x0) / cell) + np.floor((yy - y0) / cell)) % 2 == 0)
        else:  # stroke cluster
            mask = np.zeros((h, w), bool)
            sy, sx = rng.random(2)
            for _ in range(int(rng.integers(2, 5))):
                a = rng.uniform(0, math.pi)
                ln = rng.uniform(0.2, 0.6)
                width = rng.uniform(0.01, 0.03)
                ex, ey = sx + ln * math.cos(a), sy + ln * math.sin(a)
                dx, dy = ex - sx, ey - sy
                s = np.clip(((xx - sx) * dx + (yy - sy) * dy) / (dx * dx + dy * dy), 0, 1)
                mask |= (xx - sx - s * dx) ** 2 + (yy - sy - s * dy) ** 2 <= width * width
                sx, sy = ex % 1.0, ey % 1.0
        img[mask] = colour
    return np.clip(img, 0.0, 1.0)


# -- augmentation ------------------------------------------------------------
def hflip(x: np.ndarray) -> np.ndarray:
    return x[:, ::-1]


def vflip(x: np.ndarray) -> np.ndarray:
    return x[::-1]


def augment(x: np.ndarray, rng: np.random.Generator, *others: np.ndarray):
    """Independent horizontal/vertical flips with p=0.5, applied identically to ``others``."""
    do_h, do_v = rng.random() < 0.5, rng.random() < 0.5
    out = []
    for img in (x,) + others:
        if do_h:
            img = hflip(img)
        if do_v:
            img = vflip(img)
        out.append(np.ascontiguousarray(img))
    return out[0] if not others else tuple(out)


def crop_patch(x: np.ndarray, size: int, rng: np.random.Generator, *others: np.ndarray):
    h, w = x.shape[:2]
    if size > h or size > w:
        raise ValueError(f"crop size {size} larger than image {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    out = [img[top : top + size, left : left + size] for img in (x,) + others]
    return out[0] if not others else tuple(out)


# -- datasets ----------------------------------------------------------------
def make_synthetic_pairs(spec: DatasetSpec, count: int | None = None, seed_offset: int = 0) -> list[Pair]:
    """Sharp/blurred pairs; pair ``i`` depends only on (seed, seed_offset + i)."""
    count = spec.count if count is None else count
    pairs = []
    for i in range(count):
        rng = np.random.default_rng([spec.seed, seed_offset + i])
        sharp = synth_sharp(spec, rng)
        kernel, info = random_kernel(spec, rng)
        blur = degrade(sharp, kernel, spec.noise_sigma, rng)
        pairs.append(Pair(sharp, blur, info))
    return pairs


def ingest_pairs(dir_sharp, dir_blur) -> list[Pair]:
    dir_sharp, dir_blur = Path(dir_sharp), Path(dir_blur)
    sharp_names = {p.name for p in dir_sharp.glob("*.ppm")}
    blur_names = {p.name for p in dir_blur.glob("*.ppm")}
    orphans = sorted(sharp_names ^ blur_names)
    if orphans:
        raise DataError(f"orphan file without a partner: {orphans[0]}")
    pairs = []
    for name in sorted(sharp_names):
        try:
            sharp = read_ppm(dir_sharp / name)
            blur = read_ppm(dir_blur / name)
        except (OSError, PPMFormatError) as exc:
            raise DataError(f"unreadable image {name}: {exc}") from None
        if sharp.shape != blur.shape:
            raise DataError(f"dimension mismatch for {name}: sharp {sharp.shape[:2]} vs blur {blur.shape[:2]}")
        pairs.append(Pair(sharp, blur, {"name": name}))
    return pairs


def load_dataset(spec: DatasetSpec) -> list[Pair]:
    if spec.source == "synthetic":
        return make_synthetic_pairs(spec)
    if spec.source == "paired-directory":
        return ingest_pairs(spec.sharp_dir, spec.blur_dir)
    raise ValueError(f"unknown dataset source {spec.source!r}")


def to_batch(images) -> np.ndarray:
    """Stack (H, W, 3) images into an (N, 3, H, W) array."""
    return np.ascontiguousarray(np.stack([np.asarray(im) for im in images]).transpose(0, 3, 1, 2))


def from_batch(batch: np.ndarray) -> list[np.ndarray]:
    return list(np.asarray(batch).transpose(0, 2, 3, 1))


def sample_batch(pairs: list[Pair], batch_size: int, patch: int, rng: np.random.Generator):
    """Random minibatch with crop + flip augmentation; returns (blur, sharp) as (N, 3, P, P)."""
    if not pairs:
        raise DataError("dataset is empty")
    idx = rng.integers(0, len(pairs), size=batch_size)
    blurs, sharps = [], []
    for i in idx:
        pair = pairs[int(i)]
        blur, sharp = pair.blur, pair.sharp
        if blur.shape[0] > patch or blur.shape[1] > patch:
            blur, sharp = crop_patch(blur, patch, rng, sharp)
        blur, sharp = augment(blur, rng, sharp)
        blurs.append(blur)
        sharps.append(sharp)
    return to_batch(blurs), to_batch(sharps)
