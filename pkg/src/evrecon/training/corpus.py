"""Paired degraded/clean image corpora and toy video sets on disk."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..degrade import RecipeRanges, apply_recipe, area_matrix, sample_recipe
from ..imageio import read_manifest, read_pnm, to_uint8, write_manifest, write_pnm
from ..numerics.tensor import bilinear_matrix
from .toydata import procedural_image, procedural_video

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm")
MANIFEST = "manifest.txt"
HASHES = "hashes.txt"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def square_resize(img: np.ndarray, size: int) -> np.ndarray:
    """Centre-crop to a square, then area-average down (or bilinear up) to ``size``."""
    h, w = img.shape[:2]
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    crop = img[y0:y0 + s, x0:x0 + s]
    if s == size:
        return crop.astype(np.float64)
    m = area_matrix(s, size) if s > size else bilinear_matrix(s, size)
    out = np.tensordot(m, crop, axes=(1, 0))
    out = np.tensordot(m, out, axes=(1, 1))  # (size_x, size_y, ...)
    return np.swapaxes(out, 0, 1)


def image_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


@dataclass
class CorpusResult:
    manifest: Path
    pairs: list[tuple[Path, Path, int]]
    skipped: list[tuple[Path, str]] = field(default_factory=list)
    reused: int = 0


def build_surrogate_corpus(hq_dir, ranges: RecipeRanges | None, seed: int, out_dir,
                           size: int = 64) -> CorpusResult:
    """Crop every clean image in ``hq_dir`` to ``size``, degrade it with a recipe
    derived from (seed, index), and write the pair plus a manifest of
    ``lq_path hq_path seed`` lines. Outputs whose recorded hashes still match
    are left untouched on reruns."""
    hq_dir, out_dir = Path(hq_dir), Path(out_dir)
    sources = sorted(p for p in hq_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) \
        if hq_dir.is_dir() else []
    if not sources:
        raise ValueError(f"no .ppm/.pgm images in {hq_dir}")
    ranges = ranges or RecipeRanges()
    (out_dir / "hq").mkdir(parents=True, exist_ok=True)
    (out_dir / "lq").mkdir(parents=True, exist_ok=True)
    known = _read_hashes(out_dir / HASHES)
    hashes: dict[str, str] = {}
    pairs, skipped, reused = [], [], 0
    for index, src in enumerate(sources):
        stem = f"{index:05d}"
        hq_path, lq_path = out_dir / "hq" / f"{stem}.ppm", out_dir / "lq" / f"{stem}.pgm"
        rseed = image_seed(seed, index)
        src_hash = sha256_file(src)
        key = f"{src_hash}:{rseed}:{size}:{ranges!r}"
        if (known.get(f"{stem}.key") == hashlib.sha256(key.encode()).hexdigest()
                and _matches(hq_path, known.get(f"{stem}.hq"))
                and _matches(lq_path, known.get(f"{stem}.lq"))):
            reused += 1
        else:
            try:
                img = read_pnm(src)
            except (OSError, ValueError) as exc:
                log.warning("skipping %s: %s", src, exc)
                skipped.append((src, str(exc)))
                continue
            if img.ndim == 2:
                img = np.stack([img] * 3, axis=-1)
            hq8 = to_uint8(square_resize(img, size))
            recipe = sample_recipe(np.random.default_rng(rseed), rseed, ranges)
            lq = apply_recipe(hq8 / 255.0, recipe)
            write_pnm(hq_path, hq8)
            write_pnm(lq_path, lq)
            (out_dir / "lq" / f"{stem}.recipe").write_text(recipe.to_text())
        hashes[f"{stem}.key"] = hashlib.sha256(key.encode()).hexdigest()
        hashes[f"{stem}.hq"] = sha256_file(hq_path)
        hashes[f"{stem}.lq"] = sha256_file(lq_path)
        pairs.append((lq_path, hq_path, rseed))
    manifest = out_dir / MANIFEST
    lines = [f"# lq_path hq_path seed  (source dir {hq_dir}, seed {seed}, size {size})"]
    lines += [f"{lq.relative_to(out_dir)} {hq.relative_to(out_dir)} {s}" for lq, hq, s in pairs]
    lines += [f"# skipped {p}: {why}" for p, why in skipped]
    manifest.write_text("\n".join(lines) + "\n")
    (out_dir / HASHES).write_text("".join(f"{k} {v}\n" for k, v in sorted(hashes.items())))
    return CorpusResult(manifest, pairs, skipped, reused)


def _matches(path: Path, digest: str | None) -> bool:
    return digest is not None and path.exists() and sha256_file(path) == digest


def _read_hashes(path: Path) -> dict[str, str]:
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        parts = line.split()
        if len(parts) == 2:
            out[parts[0]] = parts[1]
    return out


def read_corpus(manifest) -> list[tuple[Path, Path, int]]:
    manifest = Path(manifest)
    pairs = []
    for lineno, raw in enumerate(manifest.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{manifest}:{lineno}: expected 'lq_path hq_path seed'")
        lq, hq = (Path(p) if Path(p).is_absolute() else manifest.parent / p for p in parts[:2])
        pairs.append((lq, hq, int(parts[2])))
    return pairs


def load_corpus(manifest) -> tuple[np.ndarray, np.ndarray]:
    """Stack a corpus into (N, H, W) degraded and (N, H, W, 3) clean arrays."""
    pairs = read_corpus(manifest)
    if not pairs:
        raise ValueError(f"{manifest}: corpus is empty")
    lq = np.stack([read_pnm(p) for p, _, _ in pairs])
    hq = np.stack([read_pnm(p) for _, p, _ in pairs])
    return lq, hq


def write_toy_images(out_dir, n: int, size: int = 64, seed: int = 0) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        p = out_dir / f"img{i:05d}.ppm"
        write_pnm(p, procedural_image(rng, size))
        paths.append(p)
    return paths


def write_toy_video(out_dir, seed: int, size: int = 64, n_frames: int = 24,
                    frame_dt: int = 5000) -> Path:
    """Write frames as PPM plus a ``timestamp_us path`` manifest; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, ts = procedural_video(np.random.default_rng(seed), size, n_frames, frame_dt)
    entries = []
    for k, (f, t) in enumerate(zip(frames, ts)):
        name = f"frame{k:04d}.ppm"
        write_pnm(out_dir / name, f)
        entries.append((t, name))
    write_manifest(out_dir / "frames.txt", entries)
    return out_dir / "frames.txt"


def load_video(manifest) -> tuple[list[np.ndarray], list[int]]:
    entries = read_manifest(manifest)
    return [read_pnm(p) for _, p in entries], [t for t, _ in entries]
