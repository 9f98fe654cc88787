"""Training run settings, read from ``key = value`` text."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .. import config as cfgio
from ..model.pipeline import ModelConfig

STAGES = (0, 1, 2, 3)

# Iteration counts and batch sizes reported for the full-scale model; the
# desk-scale defaults below are far smaller.
REFERENCE_SCALE = {
    1: dict(iterations=180_000, batch_size=10),
    2: dict(iterations=12_000, seq_len=40),
    3: dict(iterations=12_000, seq_len=30),
}


@dataclass
class TrainingConfig:
    stage: int = 1
    iterations: int = 200
    batch_size: int = 8
    seq_len: int = 6
    lambda1: float = 1.0
    lambda2: float = 2.0
    lambda3: float = 1.0
    kl_weight: float = 1e-3
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    corpus: str = ""
    val_count: int = 16
    videos: str = "toy"
    n_videos: int = 20
    n_val_videos: int = 2
    video_size: int = 64
    video_frames: int = 24
    frame_dt: int = 5000
    contrast: float = 0.2
    merge_window: int = 20
    drop_prob: float = 0.05
    kill_prob: float = 0.3
    val_every: int = 50
    out_dir: str = "runs"
    init: str = ""
    deterministic: bool = True

    def validate(self) -> "TrainingConfig":
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage}")
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.batch_size <= 0 or self.seq_len < 2:
            raise ValueError("batch_size must be positive and seq_len at least 2")
        for name in ("lambda1", "lambda2", "lambda3", "kl_weight", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.stage in (0, 1) and not self.corpus:
            raise ValueError(f"stage {self.stage} needs a corpus manifest (corpus = ...)")
        if self.video_frames < self.seq_len + 1:
            raise ValueError("video_frames must exceed seq_len")
        return self

    def checkpoint_path(self, stage: int | None = None) -> Path:
        return Path(self.out_dir) / f"stage{self.stage if stage is None else stage}.evdw"

    def metrics_path(self) -> Path:
        return Path(self.out_dir) / f"stage{self.stage}.metrics.csv"

    def to_text(self, model: ModelConfig | None = None) -> str:
        items = cfgio.to_mapping(self)
        if model is not None:
            items.update({f"model.{k}": v for k, v in cfgio.to_mapping(model).items()})
        return cfgio.format_kv(items)


def parse_training_config(text: str, **overrides) -> tuple[TrainingConfig, ModelConfig]:
    """Split ``model.*`` keys from run keys; keyword overrides win over the text."""
    kv = cfgio.parse_kv(text)
    kv.update({k: cfgio.fmt_value(v) for k, v in overrides.items() if v is not None})
    model_kv = {k[6:]: v for k, v in kv.items() if k.startswith("model.")}
    run_kv = {k: v for k, v in kv.items() if not k.startswith("model.")}
    return cfgio.from_mapping(TrainingConfig, run_kv).validate(), ModelConfig.from_mapping(model_kv)


def load_training_config(path, **overrides) -> tuple[TrainingConfig, ModelConfig]:
    return parse_training_config(Path(path).read_text(), **overrides)
