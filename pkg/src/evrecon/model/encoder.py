"""Recurrent event encoder with gated temporal fusion."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..events import VoxelGrid
from ..numerics import (
    Conv2d, ConvRelu, Module, ShapeError, Tensor, as_tensor, downsample2, upsample2,
)
from ..numerics.tensor import blend, concat, sigmoid
from .codec import split_moments


@dataclass
class EtfState:
    hidden: Tensor


class Etf(Module):
    """Gate g = sigmoid(conv_g([conv_x(x) | conv_h(h)])); output g*x + (1-g)*h
    becomes the next hidden state."""

    def __init__(self, c: int, seed: int, name: str):
        self.conv_x = ConvRelu(c, c, 3, seed, f"{name}.conv_x")
        self.conv_h = ConvRelu(c, c, 3, seed, f"{name}.conv_h")
        self.conv_g = Conv2d(2 * c, c, 3, seed, f"{name}.conv_g")

    def gate(self, x: Tensor, h: Tensor) -> Tensor:
        return sigmoid(self.conv_g(concat([self.conv_x(x), self.conv_h(h)], axis=-1)))

    def __call__(self, x, state: EtfState) -> tuple[Tensor, EtfState]:
        x = as_tensor(x)
        if x.shape != state.hidden.shape:
            raise ShapeError("etf_forward", x.shape, state.hidden.shape)
        y = blend(self.gate(x, state.hidden), x, state.hidden)
        return y, EtfState(y)


def etf_forward(x, state: EtfState, etf: Etf) -> tuple[Tensor, EtfState]:
    return etf(x, state)


class EvEncoder(Module):
    """Voxel stem at full resolution, fusion at 1/2 and 1/4 resolution, and a
    head over both scales emitting (mean, logvar) on the codec's latent grid."""

    def __init__(self, t_bins: int = 5, channels: int = 16, latent: int = 4, seed: int = 0,
                 name: str = "evenc"):
        c = channels
        self.stem = ConvRelu(t_bins, c, 3, seed, f"{name}.stem")
        self.etf1 = Etf(c, seed, f"{name}.etf1")
        self.mid = ConvRelu(c, 2 * c, 3, seed, f"{name}.mid")
        self.etf2 = Etf(2 * c, seed, f"{name}.etf2")
        self.head = Conv2d(3 * c, 2 * latent, 3, seed, f"{name}.head")
        self.t_bins, self.channels, self.latent = t_bins, c, latent

    def init_state(self, shape: tuple[int, ...]) -> list[EtfState]:
        """Zero hidden states for inputs of spatial ``shape`` = (..., H, W)."""
        *lead, h, w = shape
        if h % 4 or w % 4:
            raise ShapeError("ev_encode (height and width must be multiples of 4)", tuple(shape))
        c = self.channels
        return [EtfState(Tensor(np.zeros((*lead, h // 2, w // 2, c)))),
                EtfState(Tensor(np.zeros((*lead, h // 4, w // 4, 2 * c))))]

    def step(self, voxels, states: list[EtfState]) -> tuple[tuple[Tensor, Tensor], list[EtfState]]:
        v = as_tensor(voxels.data if isinstance(voxels, VoxelGrid) else voxels)
        if v.shape[-1] != self.t_bins:
            raise ShapeError("ev_encode (time bins)", v.shape, (self.t_bins,))
        y1, s1 = self.etf1(downsample2(self.stem(v)), states[0])
        y2, s2 = self.etf2(downsample2(self.mid(y1)), states[1])
        feats = concat([y1, upsample2(y2)], axis=-1)
        return split_moments(self.head(feats), self.latent), [s1, s2]


def ev_encode(voxels: Sequence, encoder: EvEncoder,
              states: list[EtfState] | None = None) -> list[tuple[Tensor, Tensor]]:
    """Run the encoder over a sequence of voxel grids (each (H,W,T) or batched
    (N,H,W,T)), threading the fusion state. Starts from zeros unless given."""
    if len(voxels) == 0:
        return []
    first = voxels[0].data if isinstance(voxels[0], VoxelGrid) else voxels[0]
    shape = np.shape(first)
    for v in voxels:
        vs = np.shape(v.data if isinstance(v, VoxelGrid) else v)
        if vs != shape:
            raise ShapeError("ev_encode (grids differ)", shape, vs)
    if states is None:
        states = encoder.init_state(shape[:-1])
    out = []
    for v in voxels:
        moments, states = encoder.step(v, states)
        out.append(moments)
    return out
