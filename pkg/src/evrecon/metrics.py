"""Full-reference fidelity metrics and the grayscale evaluation protocol."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .imageio import luma

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
CSV_COLUMNS = ("frame", "mse", "ssim")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation keeping only fully-inside windows
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=1) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=0) @ g


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"ssim: need equal 2-D shapes, got {a.shape} and {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim: image {a.shape} smaller than {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1, c2 = (SSIM_K1 * data_range) ** 2, (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows."""
    return float(ssim_map(a, b, data_range).mean())


@dataclass
class MetricReport:
    mse: list[float]
    ssim: list[float]
    # reserved for externally computed perceptual metrics
    lpips: float | None = None
    fid: float | None = None
    fvd: float | None = None
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return len(self.mse)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse)) if self.mse else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else float("nan")

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, (m, s) in enumerate(zip(self.mse, self.ssim)):
            w.writerow([i, repr(m), repr(s)])
        w.writerow(["mean", repr(self.mean_mse), repr(self.mean_ssim)])
        return out.getvalue()

    def summary(self) -> str:
        lines = [
            "== evaluation (grayscale) ==",
            f"frames : {self.frames}",
            f"MSE    : {self.mean_mse:.6f}",
            f"SSIM   : {self.mean_ssim:.6f}",
        ]
        for name in ("lpips", "fid", "fvd"):
            val = getattr(self, name)
            lines.append(f"{name.upper():<7}: {'n/a' if val is None else f'{val:.4f}'}")
        return "\n".join(lines)


def evaluate_sequence(pred: Sequence[np.ndarray], gt: Sequence[np.ndarray]) -> MetricReport:
    """Per-frame MSE and SSIM after converting both sides to grayscale."""
    if len(pred) != len(gt):
        raise ValueError(f"frame count mismatch: {len(pred)} predicted vs {len(gt)} reference")
    m, s = [], []
    for p, g in zip(pred, gt):
        pg, gg = luma(p), luma(g)
        m.append(mse(pg, gg))
        s.append(ssim(pg, gg))
    return MetricReport(m, s)
