"""Reference full-sequence self-attention, used only as a cost baseline."""
from __future__ import annotations

import numpy as np


def self_attention(tokens: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray,
                   block: int = 512) -> np.ndarray:
    """Single-head softmax attention of every token over every token.

    tokens: (L, C). Queries are processed in blocks to bound memory; the work
    is still quadratic in L.
    """
    q, k, v = tokens @ wq, tokens @ wk, tokens @ wv
    scale = 1.0 / np.sqrt(q.shape[1])
    out = np.empty_like(v)
    for s in range(0, len(q), block):
        logits = (q[s:s + block] @ k.T) * scale
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        out[s:s + block] = w @ v
    return out


def video_tokens(features: np.ndarray) -> np.ndarray:
    """(T, H, W, C) feature volume -> (T*H*W, C) token matrix."""
    return features.reshape(-1, features.shape[-1])
