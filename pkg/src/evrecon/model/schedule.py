"""Variance-preserving diffusion coefficients."""
from __future__ import annotations

import numpy as np

SCHEDULES = ("linear", "cosine")
VP_TOL = 1e-12


class DiffusionSchedule:
    """Per-timestep (alpha_t, beta_t) with alpha_t**2 + beta_t**2 = 1.

    ``linear`` sets alpha_bar_t = 1 - t / n, so t = 190 gives alpha^2 = 0.81.
    ``cosine`` uses the squared-cosine alpha_bar with offset 0.008.
    Coefficients are stored as cos/sin of one angle per step.
    """

    def __init__(self, kind: str = "linear", n_steps: int = 1000, t_star: int = 190):
        if kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {kind!r}; choose from {SCHEDULES}")
        if n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        t = np.arange(n_steps, dtype=np.float64)
        if kind == "linear":
            abar = 1.0 - t / n_steps
        else:
            s = 0.008
            f = np.cos((t / n_steps + s) / (1 + s) * np.pi / 2) ** 2
            abar = f / f[0]
        theta = np.arccos(np.sqrt(np.clip(abar, 0.0, 1.0)))
        self.kind, self.n_steps = kind, n_steps
        self.alphas, self.betas = np.cos(theta), np.sin(theta)
        self.t_star = int(t_star)
        self.validate()

    @classmethod
    def from_arrays(cls, alphas, betas, t_star: int) -> "DiffusionSchedule":
        obj = cls.__new__(cls)
        obj.kind, obj.n_steps = "custom", len(alphas)
        obj.alphas = np.asarray(alphas, dtype=np.float64).copy()
        obj.betas = np.asarray(betas, dtype=np.float64).copy()
        obj.t_star = int(t_star)
        obj.validate()
        return obj

    def validate(self) -> None:
        a, b = self.alphas, self.betas
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("alphas and betas must be 1-D arrays of equal length")
        if not np.all(np.abs(a * a + b * b - 1.0) <= VP_TOL):
            raise ValueError("schedule is not variance preserving (alpha^2 + beta^2 != 1)")
        if np.any(np.diff(a) > 0):
            raise ValueError("alpha must be non-increasing in t")
        if not 0 <= self.t_star < len(a):
            raise ValueError(f"t_star {self.t_star} outside [0, {len(a)})")
        if a[self.t_star] <= 0:
            raise ValueError("alpha at t_star must be positive")

    @property
    def alpha(self) -> float:
        return float(self.alphas[self.t_star])

    @property
    def beta(self) -> float:
        return float(self.betas[self.t_star])


def timestep_embedding(t: int, dim: int = 16, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal features [sin(t f_k), cos(t f_k)] with geometric frequencies."""
    half = dim // 2
    freqs = max_period ** (-np.arange(half) / half)
    ang = float(t) * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])
