"""Residual conv noise predictor eps(z; t) and the one-step latent update."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..numerics import Conv2d, Linear, Module, Tensor, as_tensor, downsample2, upsample2
from ..numerics.tensor import relu
from .schedule import DiffusionSchedule, timestep_embedding

TEMB_DIM = 16


class ResBlock(Module):
    def __init__(self, c: int, seed: int, name: str):
        self.conv1 = Conv2d(c, c, 3, seed, f"{name}.conv1")
        self.conv2 = Conv2d(c, c, 3, seed, f"{name}.conv2")

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.conv2(relu(self.conv1(relu(x))))


class Denoiser(Module):
    """Four residual blocks with one 2x down/up pair; the timestep enters as a
    sinusoidal embedding projected to a per-channel feature bias.

    The output conv starts at zero, so an untrained denoiser predicts no noise.
    """

    def __init__(self, latent: int = 4, channels: int = 32, seed: int = 0, name: str = "denoiser"):
        d = channels
        self.inp = Conv2d(latent, d, 3, seed, f"{name}.inp")
        self.temb = Linear(TEMB_DIM, d, seed, f"{name}.temb")
        self.b1 = ResBlock(d, seed, f"{name}.b1")
        self.b2 = ResBlock(d, seed, f"{name}.b2")
        self.b3 = ResBlock(d, seed, f"{name}.b3")
        self.b4 = ResBlock(d, seed, f"{name}.b4")
        self.out = Conv2d(d, latent, 3, seed, f"{name}.out")
        self.out.w.data[...] = 0.0
        self.out.b.data[...] = 0.0

    def __call__(self, z, t: int) -> Tensor:
        emb = self.temb(Tensor(timestep_embedding(t, TEMB_DIM)[None]))[0]
        h = self.inp(as_tensor(z)) + emb
        skip = self.b1(h)
        h = self.b3(self.b2(downsample2(skip)))
        h = self.b4(upsample2(h) + skip)
        return self.out(relu(h))


EpsFn = Callable[[Tensor, int], Tensor]


def os_diff(z, schedule: DiffusionSchedule, eps: EpsFn, t: int | None = None) -> Tensor:
    """One denoising step from a noised latent straight to the clean estimate:
    z_hat = (z - beta_t * eps(z, t)) / alpha_t."""
    t = schedule.t_star if t is None else int(t)
    alpha, beta = float(schedule.alphas[t]), float(schedule.betas[t])
    if not alpha > 0:
        raise ValueError(f"alpha at t={t} must be positive")
    z = as_tensor(z)
    return (z - eps(z, t) * beta) / alpha


def vp_forward(z0: np.ndarray, noise: np.ndarray, schedule: DiffusionSchedule, t: int) -> np.ndarray:
    """Forward noising z_t = alpha_t z0 + beta_t n."""
    return schedule.alphas[t] * z0 + schedule.betas[t] * noise
