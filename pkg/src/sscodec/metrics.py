"""Distortion and rate metrics, RD curves and Bjontegaard deltas."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP_DB = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
CSV_FIELDS = ("label", "bpp", "psnr_db", "ms_ssim")


def psnr(x, x_hat, peak: float = 1.0) -> float:
    x = np.asarray(x, np.float64)
    x_hat = np.asarray(x_hat, np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    mse = float(np.mean((x - x_hat) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(coords**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Separable 'valid' Gaussian filtering over the last two axes."""
    half = len(win) // 2
    out = correlate1d(img, win, axis=-1, mode="constant")[..., half : img.shape[-1] - half]
    out = correlate1d(out, win, axis=-2, mode="constant")[..., half : img.shape[-2] - half, :]
    return out


def _ssim_terms(x: np.ndarray, y: np.ndarray, peak: float):
    """Per-channel mean SSIM and contrast-structure over (C, H, W) inputs."""
    win = _gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_x = _filter_valid(x, win)
    mu_y = _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mu_x * mu_x
    syy = _filter_valid(y * y, win) - mu_y * mu_y
    sxy = _filter_valid(x * y, win) - mu_x * mu_y
    cs_map = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    axes = (-2, -1)
    return (lum * cs_map).mean(axis=axes), cs_map.mean(axis=axes)


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2] // 2 * 2, img.shape[-1] // 2 * 2
    img = img[..., :h, :w]
    return 0.25 * (img[..., 0::2, 0::2] + img[..., 1::2, 0::2] + img[..., 0::2, 1::2] + img[..., 1::2, 1::2])


def ms_ssim(x, x_hat, peak: float = 1.0) -> float:
    """Multi-scale SSIM of two images shaped (C, H, W) or (1, C, H, W).

    Images under 176 px on a side use fewer scales with renormalised weights.
    """
    x = np.asarray(x, np.float64)
    y = np.asarray(x_hat, np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim == 4:
        x, y = x[0], y[0]
    side = min(x.shape[-2:])
    levels = len(MS_SSIM_WEIGHTS)
    while levels > 1 and side < SSIM_WINDOW * 2 ** (levels - 1):
        levels -= 1
    if side < SSIM_WINDOW:
        raise ValueError(f"image side {side} is smaller than the {SSIM_WINDOW}-tap window")
    if levels < len(MS_SSIM_WEIGHTS):
        warnings.warn(f"image side {side} < 176: using {levels} MS-SSIM scales")
    weights = np.asarray(MS_SSIM_WEIGHTS[:levels])
    weights = weights / weights.sum()

    factors = []
    for level in range(levels):
        ssim_c, cs_c = _ssim_terms(x, y, peak)
        if level < levels - 1:
            factors.append(np.maximum(cs_c, 0.0))
            x, y = _downsample(x), _downsample(y)
        else:
            factors.append(np.maximum(ssim_c, 0.0))
    stack = np.stack(factors)  # (levels, C)
    per_channel = np.prod(stack ** weights[:, None], axis=0)
    return float(per_channel.mean())


def bpp(total_bits: float, width: int, height: int) -> float:
    if width <= 0 or height <= 0:
        raise ValueError(f"image dims must be positive, got {width}x{height}")
    return total_bits / (width * height)


@dataclass
class RdPoint:
    bpp: float
    psnr_db: float
    ms_ssim: float
    label: str = ""

    def __post_init__(self):
        if not self.bpp > 0:
            raise ValueError(f"bpp must be positive, got {self.bpp}")
        if not 0.0 <= self.ms_ssim <= 1.0:
            raise ValueError(f"ms_ssim must lie in [0, 1], got {self.ms_ssim}")

    def csv_row(self) -> str:
        return f"{self.label},{self.bpp:.6f},{self.psnr_db:.4f},{self.ms_ssim:.6f}"


@dataclass
class RdCurve:
    points: list[RdPoint] = field(default_factory=list)

    def sorted(self) -> "RdCurve":
        return RdCurve(sorted(self.points, key=lambda p: p.bpp))

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr_db for p in self.points])

    def __len__(self):
        return len(self.points)


def write_curve(curve: RdCurve | Iterable[RdPoint], out: TextIO) -> None:
    points = curve.points if isinstance(curve, RdCurve) else list(curve)
    out.write(",".join(CSV_FIELDS) + "\n")
    for p in points:
        out.write(p.csv_row() + "\n")


def read_curve(src: TextIO | str) -> RdCurve:
    """Parse ``label,bpp,psnr_db,ms_ssim`` rows; a header row is optional."""
    if isinstance(src, str):
        src = io.StringIO(src)
    points = []
    for row in csv.reader(src):
        if not row or row[0].strip().startswith("#"):
            continue
        if tuple(c.strip() for c in row) == CSV_FIELDS:
            continue
        if len(row) != 4:
            raise ValueError(f"expected 4 fields per row, got {row}")
        label, rate, q, s = row
        points.append(RdPoint(float(rate), float(q), float(s), label.strip()))
    return RdCurve(points)


def bd_rate(anchor: RdCurve, test: RdCurve) -> float:
    """Average rate difference in percent at equal PSNR (negative: test saves bits).

    Cubic fit of log-rate against PSNR for each curve, integrated over the
    overlapping PSNR interval.
    """
    for name, curve in (("anchor", anchor), ("test", test)):
        if len(curve) < 4:
            raise ValueError(f"{name} curve needs at least 4 points, has {len(curve)}")
        if np.any(curve.rates <= 0):
            raise ValueError(f"{name} curve has non-positive rates")
    qa, qt = anchor.psnrs, test.psnrs
    lo, hi = max(qa.min(), qt.min()), min(qa.max(), qt.max())
    if hi <= lo:
        raise ValueError(f"PSNR ranges do not overlap ([{qa.min()}, {qa.max()}] vs [{qt.min()}, {qt.max()}])")
    pa = np.polyint(np.polyfit(qa, np.log(anchor.rates), 3))
    pt = np.polyint(np.polyfit(qt, np.log(test.rates), 3))
    avg_a = (np.polyval(pa, hi) - np.polyval(pa, lo)) / (hi - lo)
    avg_t = (np.polyval(pt, hi) - np.polyval(pt, lo)) / (hi - lo)
    return float((np.exp(avg_t - avg_a) - 1.0) * 100.0)
