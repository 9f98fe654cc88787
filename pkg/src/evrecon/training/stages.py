"""Per-stage update steps and the event/video batch sampler they consume."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..events import EventStream, degrade_online, sample_kill_rects, to_voxel_grid
from ..model import EvDiff, ev_encode, os_diff
from ..numerics import AdamW, Tensor, backward
from ..simulator import FrameSequence, SimConfig, integrate_events, simulate
from ..imageio import luma
from .losses import kl_standard_normal, latent_mse, perceptual_proxy, temporal_consistency

COARSE_INIT = 0.5  # assumed starting brightness when integrating events from scratch

# parameter groups each stage optimises
TRAINABLE = {
    0: ("codec",),
    1: ("senc", "denoiser"),
    2: ("evenc",),
    3: ("evenc", "denoiser", "codec.dec"),
}


class NonFiniteLoss(FloatingPointError):
    def __init__(self, terms: dict[str, float]):
        super().__init__("non-finite loss: " + ", ".join(f"{k}={v!r}" for k, v in terms.items()))
        self.terms = terms


def set_trainable(model: EvDiff, stage: int) -> dict[str, Tensor]:
    """Freeze everything, then unfreeze the groups that ``stage`` updates."""
    model.requires_grad_(False)
    for name, t in model.named_tensors():
        if any(name.startswith(g + ".") for g in TRAINABLE[stage]):
            t.requires_grad = True
    return model.parameters()


def _finish(loss: Tensor, terms: dict[str, Tensor], opt: AdamW | None) -> dict[str, float]:
    out = {k: v.item() for k, v in terms.items()}
    out["loss"] = loss.item()
    if not all(np.isfinite(v) for v in out.values()):
        raise NonFiniteLoss(out)
    if opt is not None:
        opt.zero_grad()
        backward(loss)
        opt.step()
    return out


# ---------------------------------------------------------------- image stages

def stage0_loss(model: EvDiff, hq: np.ndarray, kl_weight: float):
    mu, logvar = model.codec.encode(hq)
    rec = model.codec.decode(mu)
    terms = {"recon": latent_mse(rec, hq), "kl": kl_standard_normal(mu, logvar)}
    return terms["recon"] + terms["kl"] * kl_weight, terms


def stage0_step(model, hq, opt, kl_weight: float = 1e-3) -> dict[str, float]:
    """Autoencoder fit of the codec on clean images."""
    loss, terms = stage0_loss(model, hq, kl_weight)
    return _finish(loss, terms, opt)


def stage1_loss(model: EvDiff, lq: np.ndarray, hq: np.ndarray, lambda1: float, lambda2: float):
    z = model.senc(lq)[0]
    z_pred = os_diff(z, model.schedule, model.denoiser)
    z_gt = Tensor(model.codec.encode_mean(hq).data)
    terms = {"latent": latent_mse(z_pred, z_gt)}
    loss = terms["latent"] * lambda1
    if lambda2 > 0:
        terms["perceptual"] = perceptual_proxy(model.codec.decode(z_pred), Tensor(hq))
        loss = loss + terms["perceptual"] * lambda2
    return loss, terms


def stage1_step(model, lq, hq, opt, lambda1: float = 1.0, lambda2: float = 2.0) -> dict[str, float]:
    """Degraded image -> surrogate encoder -> one-step denoise, matched to the
    clean image's codec latent and, through the frozen decoder, its features."""
    loss, terms = stage1_loss(model, lq, hq, lambda1, lambda2)
    return _finish(loss, terms, opt)


# ---------------------------------------------------------------- event stages

def teacher_latents(model: EvDiff, coarse: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Frozen surrogate-encoder means of integrated-event frames."""
    return [model.senc(c)[0].data.copy() for c in coarse]


def stage2_loss(model: EvDiff, voxels: Sequence[np.ndarray], targets: Sequence[np.ndarray],
                kl_weight: float):
    if len(voxels) < 2:
        raise ValueError("stage 2 needs sequences of at least 2 windows")
    kl = mse = None
    for (mu, logvar), z_vae in zip(ev_encode(voxels, model.evenc), targets):
        k, m = kl_standard_normal(mu, logvar), latent_mse(mu, z_vae)
        kl = k if kl is None else kl + k
        mse = m if mse is None else mse + m
    n = float(len(voxels))
    terms = {"kl": kl / n, "latent": mse / n}
    return terms["kl"] * kl_weight + terms["latent"], terms


def stage2_step(model, voxels, coarse, opt, kl_weight: float = 1e-3) -> dict[str, float]:
    """Distil the event encoder toward the teacher's latents of coarse frames."""
    targets = teacher_latents(model, coarse)
    loss, terms = stage2_loss(model, voxels, targets, kl_weight)
    return _finish(loss, terms, opt)


def stage3_loss(model: EvDiff, voxels: Sequence[np.ndarray], gt: Sequence[np.ndarray],
                lambda1: float, lambda2: float, lambda3: float):
    if len(voxels) < 2 or len(voxels) != len(gt):
        raise ValueError("stage 3 needs matching voxel/frame sequences of length >= 2")
    preds, lat, perc = [], None, None
    for (mu, _), frame in zip(ev_encode(voxels, model.evenc), gt):
        z_pred = os_diff(mu, model.schedule, model.denoiser)
        img = model.codec.decode(z_pred)
        preds.append(img)
        z_gt = Tensor(model.codec.encode_mean(frame).data)
        m = latent_mse(z_pred, z_gt)
        lat = m if lat is None else lat + m
        if lambda1 > 0:
            p = perceptual_proxy(img, Tensor(frame))
            perc = p if perc is None else perc + p
    terms = {"latent": lat}
    loss = lat * lambda3
    if lambda1 > 0:
        terms["perceptual"] = perc
        loss = loss + perc * lambda1
    if lambda2 > 0:
        terms["flow"] = temporal_consistency(preds, [Tensor(f) for f in gt])
        loss = loss + terms["flow"] * lambda2
    return loss, terms


def stage3_step(model, voxels, gt, opt, lambda1: float = 1.0, lambda2: float = 2.0,
                lambda3: float = 1.0) -> dict[str, float]:
    """Joint fine-tune of event encoder, denoiser and decoder against clean video."""
    loss, terms = stage3_loss(model, voxels, gt, lambda1, lambda2, lambda3)
    return _finish(loss, terms, opt)


# ------------------------------------------------------------------ video data

@dataclass
class SimVideo:
    frames: list[np.ndarray]      # RGB in [0, 1]
    timestamps: list[int]
    events: EventStream

    @property
    def size(self) -> tuple[int, int]:
        return self.frames[0].shape[0], self.frames[0].shape[1]


def simulate_video(frames: Sequence[np.ndarray], timestamps: Sequence[int],
                   contrast: float) -> SimVideo:
    seq = FrameSequence([luma(f) for f in frames], list(timestamps))
    events = simulate(seq, SimConfig(c_pos=contrast, c_neg=contrast))
    return SimVideo([np.asarray(f, dtype=np.float64) for f in frames], list(timestamps), events)


def window_voxels(events: EventStream, timestamps: Sequence[int], start: int, length: int,
                  t_bins: int) -> list[np.ndarray]:
    """Voxel grid per inter-frame interval (t_k, t_k+1] for k = start .. start+length-1."""
    out = []
    for k in range(start, start + length):
        lo, hi = timestamps[k] + 1, timestamps[k + 1] + 1
        sel = (events.t >= lo) & (events.t < hi)
        out.append(to_voxel_grid(events.take(sel), t_bins, lo, hi - 1).data)
    return out


def coarse_frames(events: EventStream, timestamps: Sequence[int], start: int, length: int,
                  contrast: float) -> list[np.ndarray]:
    """Integrate events from a flat start at frame ``start`` and snapshot at the
    next ``length`` frame times."""
    sel = events.t > timestamps[start]
    init = np.full((events.height, events.width), np.log(COARSE_INIT))
    snaps = integrate_events(events.take(sel), contrast, contrast, init,
                             timestamps[start + 1:start + 1 + length])
    return [np.clip(s, 0.0, 1.0) for s in snaps]


@dataclass
class SequenceBatch:
    voxels: list[np.ndarray]   # length L, each (N, H, W, T)
    coarse: list[np.ndarray]   # length L, each (N, H, W)
    gt: list[np.ndarray]       # length L, each (N, H, W, 3)


def sample_sequences(videos: Sequence[SimVideo], rng: np.random.Generator, batch: int,
                     length: int, t_bins: int, contrast: float, merge_window: int = 0,
                     drop_prob: float = 0.0, kill_prob: float = 0.0) -> SequenceBatch:
    """Random clips with online event corruption applied per clip."""
    vox, coarse, gt = [], [], []
    for _ in range(batch):
        v = videos[int(rng.integers(len(videos)))]
        start = int(rng.integers(0, len(v.frames) - length))
        t0, t1 = v.timestamps[start], v.timestamps[start + length]
        ev = v.events.take((v.events.t > t0) & (v.events.t <= t1))
        h, w = v.size
        rects = sample_kill_rects(rng, w, h) if rng.random() < kill_prob else []
        ev = degrade_online(ev, rng, merge_window, drop_prob, rects)
        vox.append(window_voxels(ev, v.timestamps, start, length, t_bins))
        coarse.append(coarse_frames(ev, v.timestamps, start, length, contrast))
        gt.append(v.frames[start + 1:start + 1 + length])
    return SequenceBatch(
        [np.stack([s[k] for s in vox]) for k in range(length)],
        [np.stack([s[k] for s in coarse]) for k in range(length)],
        [np.stack([s[k] for s in gt]) for k in range(length)],
    )


def full_sequence(v: SimVideo, t_bins: int, contrast: float) -> SequenceBatch:
    """The whole clean clip from its first frame, as a batch of one."""
    n = len(v.frames) - 1
    return SequenceBatch(
        [x[None] for x in window_voxels(v.events, v.timestamps, 0, n, t_bins)],
        [x[None] for x in coarse_frames(v.events, v.timestamps, 0, n, contrast)],
        [f[None] for f in v.frames[1:]],
    )
