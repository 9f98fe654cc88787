"""Model bundle, checkpoint glue and event-to-video reconstruction."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import config as cfgio
from ..events import EventStream, split_windows, to_voxel_grid
from ..numerics import Module, Tensor, checkpoint, no_grad
from .codec import ImageEncoder, LatentCodec
from .denoiser import Denoiser, os_diff
from .encoder import EvEncoder, ev_encode
from .schedule import DiffusionSchedule


@dataclass
class ModelConfig:
    codec_channels: int = 16
    latent_channels: int = 4
    denoiser_channels: int = 32
    encoder_channels: int = 16
    t_bins: int = 5
    schedule: str = "linear"
    n_steps: int = 1000
    t_star: int = 190
    seed: int = 0

    def validate(self) -> "ModelConfig":
        for key in ("codec_channels", "latent_channels", "denoiser_channels",
                    "encoder_channels", "t_bins"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive")
        DiffusionSchedule(self.schedule, self.n_steps, self.t_star)
        return self

    def to_text(self) -> str:
        return cfgio.format_kv(cfgio.to_mapping(self))

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        return cls.from_mapping(cfgio.parse_kv(text))

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ModelConfig":
        return cfgio.from_mapping(cls, mapping).validate()


class EvDiff(Module):
    """All networks of the reconstruction stack under stable parameter names.

    codec     image autoencoder; its encoder provides latent targets
    senc      trainable copy of the image encoder used on degraded inputs
    denoiser  one-step noise predictor
    evenc     recurrent event encoder
    """

    def __init__(self, cfg: ModelConfig | None = None):
        cfg = (cfg or ModelConfig()).validate()
        s = cfg.seed
        self.codec = LatentCodec(cfg.codec_channels, cfg.latent_channels, s, "codec")
        self.senc = ImageEncoder(cfg.codec_channels, cfg.latent_channels, s, "senc")
        self.denoiser = Denoiser(cfg.latent_channels, cfg.denoiser_channels, s, "denoiser")
        self.evenc = EvEncoder(cfg.t_bins, cfg.encoder_channels, cfg.latent_channels, s, "evenc")
        self._cfg = cfg
        self._schedule = DiffusionSchedule(cfg.schedule, cfg.n_steps, cfg.t_star)

    @property
    def cfg(self) -> ModelConfig:
        return self._cfg

    @property
    def schedule(self) -> DiffusionSchedule:
        return self._schedule

    def subset(self, prefix: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_tensors() if k.startswith(prefix + ".")}

    @staticmethod
    def config_path(path) -> Path:
        return Path(path).with_suffix(".cfg")

    def save(self, path) -> None:
        """Weights to ``path`` and the architecture config to a ``.cfg`` sidecar."""
        checkpoint.save(path, self.state_dict())
        self.config_path(path).write_text(self.cfg.to_text())

    @classmethod
    def load(cls, path, cfg: ModelConfig | None = None) -> "EvDiff":
        """Rebuild from ``path``; the sidecar config is used unless ``cfg`` is given.
        With neither, defaults apply; strict loading still rejects any shape
        mismatch, but schedule settings cannot be checked."""
        if cfg is None and cls.config_path(path).exists():
            cfg = ModelConfig.from_text(cls.config_path(path).read_text())
        model = cls(cfg)
        model.load_state_dict(checkpoint.load(path), strict=True)
        return model

    def copy_senc_from_codec(self) -> None:
        src = dict(self.codec.enc.named_tensors())
        for k, t in self.senc.named_tensors():
            t.data = src[k].data.copy()


def decode(z_hat, codec: LatentCodec) -> Tensor:
    return codec.decode(z_hat)


def reconstruct(stream: EventStream, dt: int, model: EvDiff, t0: int | None = None,
                count: int | None = None) -> list[np.ndarray]:
    """Events -> fixed windows -> voxel grids -> recurrent latents (means) ->
    one-step denoise -> decode. Returns one RGB frame in [0, 1] per window."""
    if len(stream) == 0 and count is None:
        return []
    windows = split_windows(stream, dt, t0=t0, count=count)
    voxels = [to_voxel_grid(w, model.cfg.t_bins, t_start=ws, t_end=ws + dt - 1) for ws, w in windows]
    frames = []
    with no_grad():
        latents = ev_encode(voxels, model.evenc)
        for mu, _ in latents:
            z_hat = os_diff(mu, model.schedule, model.denoiser)
            frames.append(decode(z_hat, model.codec).data.copy())
    return frames
