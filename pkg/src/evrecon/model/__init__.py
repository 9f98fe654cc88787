"""Event encoder, latent codec, one-step denoiser and the reconstruction pipeline."""
from .attention import self_attention, video_tokens
from .codec import ImageDecoder, ImageEncoder, LatentCodec, as_rgb
from .denoiser import Denoiser, ResBlock, os_diff, vp_forward
from .encoder import Etf, EtfState, EvEncoder, etf_forward, ev_encode
from .pipeline import EvDiff, ModelConfig, decode, reconstruct
from .schedule import DiffusionSchedule, timestep_embedding

__all__ = [
    "self_attention", "video_tokens", "ImageDecoder", "ImageEncoder", "LatentCodec", "as_rgb",
    "Denoiser", "ResBlock", "os_diff", "vp_forward", "Etf", "EtfState", "EvEncoder",
    "etf_forward", "ev_encode", "EvDiff", "ModelConfig", "decode", "reconstruct",
    "DiffusionSchedule", "timestep_embedding",
]
