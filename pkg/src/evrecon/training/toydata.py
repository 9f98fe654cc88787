"""Procedural images and videos for desk-scale training and tests."""
from __future__ import annotations

import numpy as np

from ..imageio import luma


def _smooth_field(rng: np.random.Generator, size: int, cells: int = 3) -> np.ndarray:
    from ..numerics.tensor import bilinear_matrix
    lat = rng.random((cells, cells))
    m = bilinear_matrix(cells, size)
    return m @ lat @ m.T


def palette(v) -> np.ndarray:
    """Fixed colour ramp over [0, 1] whose luma rises strictly with ``v``, so hue
    is recoverable from brightness the way it largely is in natural scenes."""
    v = np.asarray(v, dtype=np.float64)[..., None]
    return np.concatenate([0.1 + 0.85 * v ** 0.8, 0.08 + 0.84 * v,
                           0.3 + 0.45 * np.sin(np.pi * v)], axis=-1)


def procedural_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """RGB image in [0, 1]: smooth colour background, a few flat or striped
    shapes, mild grain. Mixes large smooth areas with sharp edges. Colours
    come from ``palette``."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c0, c1 = palette(rng.uniform(0.1, 0.9)), palette(rng.uniform(0.1, 0.9))
    t = _smooth_field(rng, size)[..., None]
    img = c0 * (1 - t) + c1 * t
    for _ in range(int(rng.integers(2, 6))):
        color = palette(rng.uniform(0.0, 1.0))
        cx, cy = rng.uniform(0, size, 2)
        r = rng.uniform(0.08, 0.3) * size
        if rng.random() < 0.5:
            inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        else:
            rw, rh = r * rng.uniform(0.5, 1.5), r * rng.uniform(0.5, 1.5)
            inside = (np.abs(xx - cx) <= rw) & (np.abs(yy - cy) <= rh)
        fill = np.broadcast_to(color, img.shape).copy()
        if rng.random() < 0.35:
            period = rng.uniform(3, 9)
            ang = rng.uniform(0, np.pi)
            stripe = 0.5 + 0.5 * np.sin(2 * np.pi * (xx * np.cos(ang) + yy * np.sin(ang)) / period)
            fill *= (0.6 + 0.4 * stripe)[..., None]
        img[inside] = fill[inside]
    img += rng.normal(0, 0.01, img.shape)
    return np.clip(img, 0.0, 1.0)


def procedural_video(rng: np.random.Generator, size: int = 64, n_frames: int = 24,
                     frame_dt: int = 5000) -> tuple[list[np.ndarray], list[int]]:
    """RGB frames of a textured background with moving shapes and a slow
    global illumination drift. Returns (frames, timestamps_us)."""
    big = procedural_image(rng, size + 16)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    pan = rng.uniform(-0.4, 0.4, 2)
    objs = []
    for _ in range(int(rng.integers(1, 4))):
        objs.append(dict(
            pos=rng.uniform(0, size, 2), vel=rng.uniform(-1.5, 1.5, 2),
            r=rng.uniform(0.08, 0.2) * size, color=palette(rng.uniform(0, 1)),
            disc=rng.random() < 0.5,
        ))
    gain0, gain1 = rng.uniform(0.8, 1.1, 2)
    frames = []
    for k in range(n_frames):
        ox = int(np.clip(8 + round(pan[0] * k), 0, 16))
        oy = int(np.clip(8 + round(pan[1] * k), 0, 16))
        img = big[oy:oy + size, ox:ox + size].copy()
        for o in objs:
            cx, cy = o["pos"] + k * o["vel"]
            if o["disc"]:
                d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2) - o["r"]
            else:
                d = np.maximum(np.abs(xx - cx), np.abs(yy - cy)) - o["r"]
            cover = np.clip(0.5 - d, 0.0, 1.0)[..., None]  # 1-px antialiasing
            img = img * (1 - cover) + o["color"] * cover
        g = gain0 + (gain1 - gain0) * k / max(1, n_frames - 1)
        frames.append(np.clip(img * g, 0.0, 1.0))
    return frames, [k * frame_dt for k in range(n_frames)]


def ramp_video(rng: np.random.Generator, size: int = 16, n_frames: int = 8,
               frame_dt: int = 4000) -> tuple[list[np.ndarray], list[int]]:
    """Gray frames whose per-pixel intensity ramps linearly between random levels."""
    a = rng.uniform(0.05, 1.0, (size, size))
    b = rng.uniform(0.05, 1.0, (size, size))
    frames = [a + (b - a) * k / (n_frames - 1) for k in range(n_frames)]
    return frames, [k * frame_dt for k in range(n_frames)]


def moving_bar_video(rng: np.random.Generator, size: int = 16, n_frames: int = 10,
                     frame_dt: int = 3000) -> tuple[list[np.ndarray], list[int]]:
    """Gray frames of an antialiased bar sweeping across a gradient background."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    bg = 0.2 + 0.5 * xx / size
    width = rng.uniform(2, 5)
    speed = rng.uniform(0.5, 2.0) * (1 if rng.random() < 0.5 else -1)
    level = rng.uniform(0.6, 1.0)
    start = rng.uniform(0, size)
    vertical = rng.random() < 0.5
    coord = xx if vertical else yy
    frames = []
    for k in range(n_frames):
        d = np.abs(coord - (start + speed * k)) - width / 2
        cover = np.clip(0.5 - d, 0.0, 1.0)
        frames.append(bg * (1 - cover) + level * cover)
    return frames, [k * frame_dt for k in range(n_frames)]


def gray_frames(frames: list[np.ndarray]) -> list[np.ndarray]:
    return [luma(f) for f in frames]
