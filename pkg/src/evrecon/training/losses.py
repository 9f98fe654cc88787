"""Training objectives: feature-space image distance, Gaussian KL, temporal consistency."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..model.codec import as_rgb
from ..numerics import Tensor, as_tensor, conv2d, downsample2, mean, relu, sum_
from ..numerics.nn import named_rng

PROXY_SEED = 0x5EED
PROXY_WIDTHS = (8, 16, 16)


class PerceptualProxy:
    """Distance between features of a fixed random 3-scale conv pyramid.

    Weights are frozen constants drawn from a fixed seed, so the metric is the
    same in every run. Each scale contributes the mean squared feature gap.
    """

    def __init__(self, seed: int = PROXY_SEED, widths: Sequence[int] = PROXY_WIDTHS):
        self.weights = []
        cin = 3
        for i, cout in enumerate(widths):
            a = np.sqrt(3.0 / (9 * cin))  # weight variance 1/fan_in keeps feature scale steady
            w = named_rng(seed, f"proxy.{i}").uniform(-a, a, (3, 3, cin, cout))
            self.weights.append(Tensor(w))
            cin = cout

    def features(self, x) -> list[Tensor]:
        feats = []
        h = as_rgb(x)
        for i, w in enumerate(self.weights):
            if i:
                h = downsample2(h)
            h = relu(conv2d(h, w))
            feats.append(h)
        return feats

    def __call__(self, a, b) -> Tensor:
        fa, fb = self.features(a), self.features(b)
        total = None
        for x, y in zip(fa, fb):
            d = mean((x - y).square())
            total = d if total is None else total + d
        return total


_DEFAULT_PROXY: PerceptualProxy | None = None


def perceptual_proxy(a, b) -> Tensor:
    global _DEFAULT_PROXY
    if _DEFAULT_PROXY is None:
        _DEFAULT_PROXY = PerceptualProxy()
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"perceptual_proxy: shape mismatch {a.shape} vs {b.shape}")
    return _DEFAULT_PROXY(a, b)


def latent_mse(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return mean((a - b).square())


def kl_standard_normal(mu, logvar, reduce: str = "mean") -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, 1)) per element, summed or averaged."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    per = (mu.square() + logvar.exp() - 1.0 - logvar) * 0.5
    if reduce == "sum":
        return sum_(per)
    if reduce == "mean":
        return mean(per)
    raise ValueError(f"reduce must be 'sum' or 'mean', got {reduce!r}")


def kl_monte_carlo(mu: float, logvar: float, n: int, rng: np.random.Generator) -> float:
    """Sample estimate of the same KL using antithetic pairs z = mu +/- sigma*e."""
    sigma = np.exp(0.5 * logvar)
    e = rng.standard_normal(n // 2)
    e = np.concatenate([e, -e])
    z = mu + sigma * e
    log_q = -0.5 * e * e - 0.5 * logvar
    log_p = -0.5 * z * z
    return float(np.mean(log_q - log_p))


def temporal_consistency(pred: Sequence[Tensor], gt: Sequence) -> Tensor:
    """Sum over consecutive pairs of mean |(P_t - P_{t-1}) - (G_t - G_{t-1})|."""
    if len(pred) != len(gt):
        raise ValueError("temporal_consistency: sequence lengths differ")
    total = None
    for t in range(1, len(pred)):
        dg = as_tensor(gt[t]) - as_tensor(gt[t - 1])
        d = mean(((pred[t] - pred[t - 1]) - dg).abs())
        total = d if total is None else total + d
    return total if total is not None else Tensor(np.zeros(()))


def warped_consistency(pred: Sequence[Tensor], gt: Sequence, flows: Sequence[np.ndarray]) -> Tensor:
    """Variant for known motion: compare P_t with P_{t-1} warped by the ground-truth
    flow, measured against the same residual on the reference frames.

    Frames are single (H, W, C) images; flows[t] is the (H, W, 2) displacement
    (dx, dy) from frame t back to t-1, applied with nearest-pixel sampling.
    """
    if not len(pred) == len(gt) == len(flows):
        raise ValueError("warped_consistency: sequence lengths differ")
    total = None
    for t in range(1, len(pred)):
        idx = _warp_index(flows[t], pred[t].shape)
        prev_w = pred[t - 1][idx]
        gt_prev = np.asarray(gt[t - 1], dtype=np.float64)[idx]
        d = mean(((pred[t] - prev_w) - (as_tensor(gt[t]) - Tensor(gt_prev))).abs())
        total = d if total is None else total + d
    return total if total is not None else Tensor(np.zeros(()))


def _warp_index(flow: np.ndarray, shape):
    h, w = shape[-3], shape[-2]
    yy, xx = np.mgrid[0:h, 0:w]
    sx = np.clip(np.rint(xx + flow[..., 0]).astype(int), 0, w - 1)
    sy = np.clip(np.rint(yy + flow[..., 1]).astype(int), 0, h - 1)
    return (sy, sx)
