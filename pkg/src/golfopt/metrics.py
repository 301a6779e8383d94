"""PSNR and single-scale SSIM.

SSIM is computed on Rec.601 luma with an 11x11 Gaussian window (sigma 1.5),
C1 = 0.01^2, C2 = 0.03^2 for a unit dynamic range, averaged over all valid
window positions (no padding).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2


def psnr(x: np.ndarray, ref: np.ndarray, max_val: float = 1.0) -> float:
    """10 log10(MAX^2 / MSE); identical inputs give ``inf``."""
    x, ref = np.asarray(x, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"psnr shape mismatch: {x.shape} vs {ref.shape}")
    err = float(np.mean((x - ref) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / err)


def _luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ LUMA
    if img.ndim == 2:
        return img
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")


def _gauss_window() -> np.ndarray:
    r = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    g = np.exp(-(r * r) / (2 * SSIM_SIGMA**2))
    return g / g.sum()


def _filter_valid(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    h, w = a.shape
    rows = sum(g[i] * a[i : h - k + 1 + i] for i in range(k))
    return sum(g[j] * rows[:, j : w - k + 1 + j] for j in range(k))


def ssim_map(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    a, b = _luma(x), _luma(ref)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    g = _gauss_window()
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return num / den


def ssim(x: np.ndarray, ref: np.ndarray) -> float:
    return float(np.mean(ssim_map(x, ref)))


@dataclass
class QualityReport:
    names: list[str] = field(default_factory=list)
    psnr_db: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    millis: list[float] = field(default_factory=list)

    def add(self, name: str, image: np.ndarray, ref: np.ndarray, millis: float | None = None) -> None:
        self.names.append(name)
        self.psnr_db.append(psnr(image, ref))
        self.ssim.append(ssim(image, ref))
        if millis is not None:
            self.millis.append(millis)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_db)) if self.psnr_db else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else math.nan

    def rows(self) -> list[list]:
        timed = len(self.millis) == len(self.names)
        out = []
        for i, name in enumerate(self.names):
            row = [name, self.psnr_db[i], self.ssim[i]]
            if timed:
                row.append(self.millis[i])
            out.append(row)
        mean = ["mean", self.mean_psnr, self.mean_ssim]
        if timed:
            mean.append(float(np.mean(self.millis)) if self.millis else math.nan)
        return out + [mean]

    def header(self) -> list[str]:
        cols = ["image", "psnr_db", "ssim"]
        return cols + ["ms"] if len(self.millis) == len(self.names) else cols

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            writer.writerows(self.rows())

    def table(self) -> str:
        header = self.header()
        lines = [f"{header[0]:<24}" + "".join(f"{h:>12}" for h in header[1:])]
        for row in self.rows():
            cells = "".join(f"{v:>12.4f}" for v in row[1:])
            lines.append(f"{str(row[0]):<24}{cells}")
        return "\n".join(lines)
