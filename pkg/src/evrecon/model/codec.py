"""Small latent autoencoder: 3-channel images <-> 4-channel half-resolution latents."""
from __future__ import annotations

from ..numerics import Conv2d, ConvRelu, Module, Tensor, as_tensor, downsample2, upsample2
from ..numerics.tensor import concat, sigmoid


def as_rgb(x) -> Tensor:
    """Accept (H,W), (N,H,W), (H,W,1|3) or (N,H,W,1|3); gray is replicated to
    three channels. A trailing axis of any other length is read as width."""
    x = as_tensor(x)
    if x.ndim < 2 or x.ndim > 4:
        raise ValueError(f"expected an image or image batch, got shape {x.shape}")
    if x.ndim == 2 or x.shape[-1] not in (1, 3):
        x = x.reshape(x.shape + (1,))
    if x.ndim > 4:
        raise ValueError(f"expected 1 or 3 channels, got shape {x.shape[:-1]}")
    if x.shape[-1] == 1:
        x = concat([x, x, x], axis=-1)
    return x

def split_moments(h: Tensor, zc: int) -> tuple[Tensor, Tensor]:
    return h[..., :zc], h[..., zc:]

class ImageEncoder(Module):
    def __init__(self, channels: int, latent: int, seed: int, name: str):
        c = channels
        self.c1 = ConvRelu(3, c, 3, seed, f"{name}.c1")
        self.c2 = ConvRelu(c, c, 3, seed, f"{name}.c2")
        self.c3 = ConvRelu(c, 2 * c, 3, seed, f"{name}.c3")
        self.out = Conv2d(2 * c, 2 * latent, 3, seed, f"{name}.out")
        self._latent = latent

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        h = self.c2(self.c1(as_rgb(x)))
        h = self.c3(downsample2(h))
        return split_moments(self.out(h), self._latent)

class ImageDecoder(Module):
    def __init__(self, channels: int, latent: int, seed: int, name: str):
        c = channels
        self.c1 = ConvRelu(latent, 2 * c, 3, seed, f"{name}.c1")
        self.c2 = ConvRelu(2 * c, c, 3, seed, f"{name}.c2")
        self.c3 = ConvRelu(c, c, 3, seed, f"{name}.c3")
        self.out = Conv2d(c, 3, 3, seed, f"{name}.out")

    def __call__(self, z) -> Tensor:
        h = upsample2(self.c1(as_tensor(z)))
        return sigmoid(self.out(self.c3(self.c2(h))))

class LatentCodec(Module):
    """Encoder gives (mean, logvar) at half resolution; decoder maps a latent
    back to an RGB image in (0, 1) at full resolution."""

    def __init__(self, channels: int = 16, latent: int = 4, seed: int = 0, name: str = "codec"):
        self.enc = ImageEncoder(channels, latent, seed, f"{name}.enc")
        self.dec = ImageDecoder(channels, latent, seed, f"{name}.dec")
        self.latent = latent

    def encode(self, x) -> tuple[Tensor, Tensor]:
        return self.enc(x)

    def encode_mean(self, x) -> Tensor:
        return self.enc(x)[0]

    def decode(self, z) -> Tensor:
        return self.dec(z)
