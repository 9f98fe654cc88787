"""Run one training stage end to end: data, steps, validation, checkpoint, CSV log."""
from __future__ import annotations

import contextlib
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ..imageio import luma
from ..metrics import mse, ssim
from ..model import EvDiff, ModelConfig, ev_encode, os_diff
from ..numerics import AdamW, no_grad
from .config import TrainingConfig
from .corpus import load_corpus, load_video
from .stages import (
    NonFiniteLoss, SimVideo, full_sequence, sample_sequences, set_trainable, simulate_video,
    stage0_step, stage1_step, stage2_step, stage3_step, teacher_latents,
)
from .toydata import procedural_video

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("iteration", "loss", "recon", "kl", "latent", "perceptual", "flow",
                  "val_latent_mse", "val_mse", "val_ssim")
TOY_VIDEO_STREAM = 0x7649  # keeps toy video seeds apart from other uses of cfg.seed


class MissingCheckpoint(ValueError):
    def __init__(self, stage: int, path: Path):
        super().__init__(f"stage {stage + 1} needs the stage {stage} checkpoint, not found at {path}")
        self.stage, self.path = stage, path


@dataclass
class StageResult:
    checkpoint: Path
    metrics: Path
    rows: list[dict]
    model: EvDiff


def iteration_rng(cfg: TrainingConfig, it: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, cfg.stage, it]))


def load_videos(cfg: TrainingConfig) -> tuple[list[SimVideo], list[SimVideo]]:
    """Training and held-out clips with their simulated (clean) events."""
    total = cfg.n_videos + cfg.n_val_videos
    if cfg.videos == "toy":
        clips = [procedural_video(np.random.default_rng([cfg.seed, TOY_VIDEO_STREAM, i]),
                                  cfg.video_size, cfg.video_frames, cfg.frame_dt)
                 for i in range(total)]
    else:
        root = Path(cfg.videos)
        manifests = sorted(root.glob("*/frames.txt")) + sorted(root.glob("*.txt"))
        if len(manifests) < total:
            raise ValueError(f"{root}: need {total} video manifests, found {len(manifests)}")
        clips = [load_video(m) for m in manifests[:total]]
    sims = [simulate_video(f, ts, cfg.contrast) for f, ts in clips]
    return sims[:cfg.n_videos], sims[cfg.n_videos:]


def _gray_scores(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    m, s = [], []
    for p, g in zip(pred, gt):
        pg, gg = luma(p), luma(g)
        m.append(mse(pg, gg))
        s.append(ssim(pg, gg))
    return float(np.mean(m)), float(np.mean(s))


def validate(stage: int, model: EvDiff, data: dict) -> dict[str, float]:
    with no_grad():
        if stage == 0:
            hq = data["val_hq"]
            rec = model.codec.decode(model.codec.encode_mean(hq)).data
            m, s = _gray_scores(rec, hq)
            return {"val_mse": m, "val_ssim": s}
        if stage == 1:
            lq, hq = data["val_lq"], data["val_hq"]
            z_pred = os_diff(model.senc(lq)[0], model.schedule, model.denoiser)
            z_gt = model.codec.encode_mean(hq)
            rec = model.codec.decode(z_pred).data
            m, s = _gray_scores(rec, hq)
            return {"val_latent_mse": float(np.mean((z_pred.data - z_gt.data) ** 2)),
                    "val_mse": m, "val_ssim": s}
        lat, preds, gts = [], [], []
        for seq in data["val_seqs"]:
            if stage == 2:
                targets = teacher_latents(model, seq.coarse)
            else:
                targets = [model.codec.encode_mean(f).data for f in seq.gt]
            for (mu, _), target, gt in zip(ev_encode(seq.voxels, model.evenc), targets, seq.gt):
                z_pred = os_diff(mu, model.schedule, model.denoiser)
                cmp = mu if stage == 2 else z_pred
                lat.append(float(np.mean((cmp.data - target) ** 2)))
                preds.append(model.codec.decode(z_pred).data[0])
                gts.append(gt[0])
        m, s = _gray_scores(preds, gts)
        return {"val_latent_mse": float(np.mean(lat)), "val_mse": m, "val_ssim": s}


def _prepare_data(cfg: TrainingConfig, t_bins: int) -> dict:
    if cfg.stage in (0, 1):
        lq, hq = load_corpus(cfg.corpus)
        if len(hq) <= cfg.val_count:
            raise ValueError(f"corpus has {len(hq)} pairs; need more than val_count={cfg.val_count}")
        n = len(hq) - cfg.val_count
        return {"lq": lq[:n], "hq": hq[:n], "val_lq": lq[n:], "val_hq": hq[n:]}
    train, val = load_videos(cfg)
    if not train or not val:
        raise ValueError("stages 2 and 3 need at least one training and one held-out video")
    return {"videos": train, "val_seqs": [full_sequence(v, t_bins, cfg.contrast) for v in val]}


def _step(cfg: TrainingConfig, model: EvDiff, opt: AdamW, data: dict, it: int) -> dict[str, float]:
    rng = iteration_rng(cfg, it)
    if cfg.stage in (0, 1):
        idx = rng.integers(0, len(data["hq"]), cfg.batch_size)
        hq = data["hq"][idx]
        if cfg.stage == 0:
            return stage0_step(model, hq, opt, cfg.kl_weight)
        return stage1_step(model, data["lq"][idx], hq, opt, cfg.lambda1, cfg.lambda2)
    batch = sample_sequences(data["videos"], rng, cfg.batch_size, cfg.seq_len, model.cfg.t_bins,
                             cfg.contrast, cfg.merge_window, cfg.drop_prob, cfg.kill_prob)
    if cfg.stage == 2:
        return stage2_step(model, batch.voxels, batch.coarse, opt, cfg.kl_weight)
    return stage3_step(model, batch.voxels, batch.gt, opt, cfg.lambda1, cfg.lambda2, cfg.lambda3)


def _load_model(cfg: TrainingConfig, model_cfg: ModelConfig | None) -> EvDiff:
    if cfg.stage == 0:
        return EvDiff(model_cfg)
    prev = Path(cfg.init) if cfg.init else cfg.checkpoint_path(cfg.stage - 1)
    if not prev.exists():
        raise MissingCheckpoint(cfg.stage - 1, prev)
    return EvDiff.load(prev, None if EvDiff.config_path(prev).exists() else model_cfg)


def run_stage(cfg: TrainingConfig, model_cfg: ModelConfig | None = None) -> StageResult:
    """Train one stage from the previous stage's checkpoint and write
    ``stage{n}.evdw`` plus ``stage{n}.metrics.csv`` under ``cfg.out_dir``."""
    cfg.validate()
    model = _load_model(cfg, model_cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    limits = threadpool_limits(limits=1) if cfg.deterministic else contextlib.nullcontext()
    rows: list[dict] = []
    with limits:
        data = _prepare_data(cfg, model.cfg.t_bins)
        if cfg.stage == 1:
            model.copy_senc_from_codec()
        params = set_trainable(model, cfg.stage)
        opt = AdamW(params, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps,
                    weight_decay=cfg.weight_decay)
        with open(cfg.metrics_path(), "w", newline="") as fh:
            writer = csv.DictWriter(fh, METRIC_COLUMNS, restval="", extrasaction="ignore",
                                    lineterminator="\n")
            writer.writeheader()
            row = {"iteration": 0, **validate(cfg.stage, model, data)}
            writer.writerow(_fmt_row(row))
            rows.append(row)
            for it in range(1, cfg.iterations + 1):
                try:
                    row = {"iteration": it, **_step(cfg, model, opt, data, it)}
                except NonFiniteLoss as exc:
                    _dump_diagnostics(cfg, model, it, exc.terms)
                    raise
                if it % cfg.val_every == 0 or it == cfg.iterations:
                    row.update(validate(cfg.stage, model, data))
                    log.info("stage %d it %d %s", cfg.stage, it, row)
                writer.writerow(_fmt_row(row))
                rows.append(row)
    model.requires_grad_(True)
    ckpt = cfg.checkpoint_path()
    model.save(ckpt)
    return StageResult(ckpt, cfg.metrics_path(), rows, model)


def _fmt_row(row: dict) -> dict:
    return {k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}


def _dump_diagnostics(cfg: TrainingConfig, model: EvDiff, it: int, terms: dict) -> Path:
    path = Path(cfg.out_dir) / f"stage{cfg.stage}.diagnostics.json"
    norms = {k: float(np.linalg.norm(t.data)) for k, t in model.named_tensors()}
    bad = [k for k, t in model.named_tensors() if not np.all(np.isfinite(t.data))]
    path.write_text(json.dumps({"stage": cfg.stage, "iteration": it, "terms": repr(terms),
                                "non_finite_parameters": bad, "parameter_norms": norms},
                               indent=1))
    log.error("non-finite loss at iteration %d; diagnostics in %s", it, path)
    return path

