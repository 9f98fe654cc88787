"""Event-camera video reconstruction through a one-step latent denoiser."""

__version__ = "0.1.0"
