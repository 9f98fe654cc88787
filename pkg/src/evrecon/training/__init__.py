"""Staged training: codec fit, degraded-image restoration, event-encoder
distillation and joint fine-tuning, plus corpus builders."""
from .config import REFERENCE_SCALE, TrainingConfig, load_training_config, parse_training_config
from .corpus import build_surrogate_corpus, load_corpus, read_corpus, write_toy_images
from .losses import (
    PerceptualProxy, kl_monte_carlo, kl_standard_normal, latent_mse, perceptual_proxy,
    temporal_consistency, warped_consistency,
)
from .runner import METRIC_COLUMNS, MissingCheckpoint, StageResult, load_videos, run_stage
from .stages import (
    NonFiniteLoss, set_trainable, stage0_step, stage1_step, stage2_step, stage3_step,
)

__all__ = [
    "REFERENCE_SCALE", "TrainingConfig", "load_training_config", "parse_training_config",
    "build_surrogate_corpus", "load_corpus", "read_corpus", "write_toy_images",
    "PerceptualProxy", "kl_monte_carlo", "kl_standard_normal", "latent_mse", "perceptual_proxy",
    "temporal_consistency", "warped_consistency", "METRIC_COLUMNS", "MissingCheckpoint",
    "StageResult", "load_videos", "run_stage", "NonFiniteLoss", "set_trainable", "stage0_step",
    "stage1_step", "stage2_step", "stage3_step",
]
