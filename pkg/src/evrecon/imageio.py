"""Netpbm (PGM/PPM) images and frame-sequence manifests."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])


def luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[..., 0]
    if img.ndim == 3 and img.shape[2] == 3:
        # 0.299 R + 0.587 G + 0.114 B, anchored on G so gray pixels map exactly to themselves
        r, g, b = img[..., 0], img[..., 1], img[..., 2]
        return g + LUMA[0] * (r - g) + LUMA[2] * (b - g)
    raise ValueError(f"cannot convert shape {img.shape} to grayscale")


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pnm(path) -> np.ndarray:
    """Read binary P5/P6 (8- or 16-bit) into float64 in [0, 1].

    Gray images come back as (H, W), colour as (H, W, 3).
    """
    blob = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(blob, pos)
        if m is None:
            raise ValueError(f"{path}: malformed PNM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM type {magic!r}")
    w, h, maxval = (int(f) for f in fields[1:])
    pos += 1  # single whitespace byte after maxval
    ch = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * ch
    if len(blob) - pos < n * dtype.itemsize:
        raise ValueError(f"{path}: truncated pixel data")
    data = np.frombuffer(blob, dtype=dtype, count=n, offset=pos).astype(np.float64) / maxval
    return data.reshape(h, w, 3) if ch == 3 else data.reshape(h, w)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pnm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write image of shape {img.shape}")
    h, w = img.shape[:2]
    data = img if img.dtype == np.uint8 else to_uint8(img)
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + data.tobytes())


def read_gray(path) -> np.ndarray:
    return luma(read_pnm(path))


def read_manifest(path) -> list[tuple[int, Path]]:
    """Parse ``timestamp_us path`` lines; relative paths resolve against the manifest."""
    path = Path(path)
    entries = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'timestamp_us path'")
        try:
            ts = int(parts[0])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad timestamp {parts[0]!r}") from None
        p = Path(parts[1])
        entries.append((ts, p if p.is_absolute() else path.parent / p))
    return entries


def write_manifest(path, entries) -> None:
    with open(path, "w") as fh:
        for ts, p in entries:
            fh.write(f"{int(ts)} {p}\n")
