"""Synthetic degradation of clean images into low-quality surrogates that
mimic the artifacts of regression-based event-to-video reconstructors:
blotchy low-frequency patches, broken soft edges, noise, motion blur and
resolution loss. Every operator is a pure function of its inputs and RNG."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from .imageio import luma
from .numerics.tensor import bilinear_matrix

FACTORS = ("blotch", "edge", "noise", "motion_blur", "resize")


def to_grayscale(image: np.ndarray) -> np.ndarray:
    return np.clip(luma(image), 0.0, 1.0)


def _gradient_magnitude(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    gx = ndimage.sobel(gray, axis=1, mode="reflect") / 8.0
    gy = ndimage.sobel(gray, axis=0, mode="reflect") / 8.0
    mag = np.hypot(gx, gy)
    mag[mag < 1e-12] = 0.0
    return mag, gx, gy


def low_detail_mask(gray: np.ndarray, var_window: int = 7, percentile: float = 30.0) -> np.ndarray:
    """Pixels whose local variance and gradient magnitude are both at or below
    the given percentile of their image-wide distributions."""
    if not 0 < percentile < 100:
        raise ValueError("percentile must lie in (0, 100)")
    if var_window < 3 or var_window % 2 == 0:
        raise ValueError("var_window must be odd and >= 3")
    m = ndimage.uniform_filter(gray, var_window, mode="reflect")
    m2 = ndimage.uniform_filter(gray * gray, var_window, mode="reflect")
    var = np.maximum(m2 - m * m, 0.0)
    var[var < 1e-12] = 0.0
    mag, _, _ = _gradient_magnitude(gray)
    return (var <= np.percentile(var, percentile)) & (mag <= np.percentile(mag, percentile))


# ------------------------------------------------------------------- blotches

@dataclass
class BlotchParams:
    count_range: tuple[int, int] = (1, 4)
    radius_frac_range: tuple[float, float] = (0.08, 0.25)
    darkness_range: tuple[float, float] = (0.25, 0.6)
    octaves: int = 3
    softness: float = 0.35
    percentile: float = 40.0
    var_window: int = 7


def value_noise(shape: tuple[int, int], rng: np.random.Generator, octaves: int = 3,
                base_cells: int = 2) -> np.ndarray:
    """Sum of bilinearly interpolated random lattices at doubling frequencies, in [0, 1]."""
    h, w = shape
    total = np.zeros(shape)
    norm = 0.0
    for o in range(octaves):
        cells = base_cells * 2 ** o
        lattice = rng.random((cells + 1, cells + 1))
        layer = bilinear_matrix(cells + 1, h) @ lattice @ bilinear_matrix(cells + 1, w).T
        amp = 0.5 ** o
        total += amp * layer
        norm += amp
    return total / norm if norm else total


def _polygon_mask(yy, xx, cy, cx, r, rng) -> np.ndarray:
    k = int(rng.integers(5, 9))
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    vx, vy = cx + r * np.cos(ang), cy + r * np.sin(ang)
    inside = np.ones(xx.shape, dtype=bool)
    for i in range(k):
        x0, y0, x1, y1 = vx[i], vy[i], vx[(i + 1) % k], vy[(i + 1) % k]
        inside &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return inside


def synth_blotches(gray: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                   params: BlotchParams | None = None) -> np.ndarray:
    """Darken masked regions with soft patches whose base blends an ellipse and
    a convex polygon, textured by multi-octave value noise."""
    params = params or BlotchParams()
    if mask.shape != gray.shape:
        raise ValueError(f"mask shape {mask.shape} != image shape {gray.shape}")
    out = gray.copy()
    lo, hi = params.count_range
    n = int(rng.integers(lo, hi + 1)) if hi > 0 else 0
    candidates = np.flatnonzero(mask)
    if n == 0 or candidates.size == 0:
        return out
    h, w = gray.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    alpha = np.zeros_like(gray)
    for _ in range(n):
        cy, cx = np.unravel_index(candidates[rng.integers(candidates.size)], gray.shape)
        r = rng.uniform(*params.radius_frac_range) * min(h, w)
        a, b = r * rng.uniform(0.5, 1.0), r * rng.uniform(0.5, 1.0)
        th = rng.uniform(0, np.pi)
        dx, dy = xx - cx, yy - cy
        u = (dx * np.cos(th) + dy * np.sin(th)) / a
        v = (-dx * np.sin(th) + dy * np.cos(th)) / b
        ellipse = (u * u + v * v <= 1.0).astype(np.float64)
        poly = _polygon_mask(yy, xx, cy, cx, r, rng).astype(np.float64)
        mix = rng.uniform()
        base = mix * ellipse + (1 - mix) * poly
        base = ndimage.gaussian_filter(base, params.softness * r, mode="constant")
        if base.max() > 0:
            base /= base.max()
        texture = 0.5 + 0.5 * value_noise(gray.shape, rng, params.octaves)
        dark = rng.uniform(*params.darkness_range)
        alpha = 1.0 - (1.0 - alpha) * (1.0 - dark * base * texture)
    out = np.where(mask, np.clip(gray * (1.0 - alpha), 0.0, 1.0), gray)
    return out


# ---------------------------------------------------------------------- edges

def degrade_edges(gray: np.ndarray, rng: np.random.Generator, blur_sigma: float = 1.0,
                  break_prob: float = 0.3, max_shift: int = 2) -> np.ndarray:
    """Soften detected edges and displace random edge segments along their normals.

    Edges are pixels whose gradient magnitude exceeds the Otsu threshold.
    """
    if blur_sigma < 0:
        raise ValueError("blur_sigma must be >= 0")
    out = gray.copy()
    if blur_sigma == 0 and break_prob == 0:
        return out
    mag, gx, gy = _gradient_magnitude(gray)
    if mag.max() == 0:
        return out
    edges = mag > threshold_otsu(mag)
    if blur_sigma > 0:
        blurred = ndimage.gaussian_filter(gray, blur_sigma, mode="reflect")
        zone = ndimage.binary_dilation(edges, iterations=max(1, int(np.ceil(2 * blur_sigma))))
        out[zone] = blurred[zone]
    if break_prob > 0 and max_shift > 0:
        labels, n = ndimage.label(edges, structure=np.ones((3, 3)))
        if n:
            hit = rng.random(n) < break_prob
            shifts = rng.integers(1, max_shift + 1, n) * rng.choice([-1, 1], n)
            norm = np.maximum(mag, 1e-12)
            nx, ny = gx / norm, gy / norm
            src = out.copy()
            for seg in np.flatnonzero(hit) + 1:
                py, px = np.nonzero(labels == seg)
                s = shifts[seg - 1]
                coords = np.vstack([py - s * ny[py, px], px - s * nx[py, px]])
                out[py, px] = ndimage.map_coordinates(src, coords, order=1, mode="reflect")
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------- noise, blur

def add_gaussian_noise(gray: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return gray.copy()
    return np.clip(gray + rng.normal(0.0, sigma, gray.shape), 0.0, 1.0)


def line_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalised kernel of a centred segment spanning ``length`` pixels.

    The segment runs between +/-(length-1)/2 and is splatted bilinearly, so a
    horizontal length-3 kernel is [1/4, 1/2, 1/4].
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    half = (length - 1) / 2.0
    size = 2 * int(np.ceil(half)) + 1
    c = size // 2
    k = np.zeros((size, size))
    if half == 0:
        k[c, c] = 1.0
        return k
    n = 64 * length
    s = -half + (np.arange(n) + 0.5) * (2 * half / n)
    th = np.deg2rad(angle_deg)
    px, py = c + s * np.cos(th), c - s * np.sin(th)
    x0, y0 = np.floor(px).astype(int), np.floor(py).astype(int)
    fx, fy = px - x0, py - y0
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yi, xi = np.clip(y0 + dy, 0, size - 1), np.clip(x0 + dx, 0, size - 1)
            np.add.at(k, (yi, xi), wy * wx)
    return k / k.sum()


def motion_blur(gray: np.ndarray, length: int, angle: float = 0.0) -> np.ndarray:
    k = line_kernel(length, angle)
    if k.shape == (1, 1):
        return gray.copy()
    return ndimage.correlate(gray, k, mode="reflect")


def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) box-filter weights: each output averages the input span it covers."""
    edges = np.arange(n_out + 1) * (n_in / n_out)
    m = np.zeros((n_out, n_in))
    for j in range(n_out):
        a, b = edges[j], edges[j + 1]
        for i in range(int(np.floor(a)), min(int(np.ceil(b)), n_in)):
            m[j, i] = min(b, i + 1) - max(a, i)
    return m / m.sum(axis=1, keepdims=True)


def resize_cycle(gray: np.ndarray, scale: float) -> np.ndarray:
    """Area-average downsample by ``scale`` then bilinear upsample to the input size."""
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    h, w = gray.shape
    sh, sw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    small = area_matrix(h, sh) @ gray @ area_matrix(w, sw).T
    return bilinear_matrix(sh, h) @ small @ bilinear_matrix(sw, w).T


# -------------------------------------------------------------------- recipes

@dataclass
class DegradationRecipe:
    seed: int = 0
    factor_order: tuple[str, ...] = FACTORS
    blotch: BlotchParams = field(default_factory=BlotchParams)
    edge_blur_sigma: float = 1.0
    edge_break_prob: float = 0.3
    edge_max_shift: int = 2
    noise_sigma: float = 0.03
    blur_length: int = 5
    blur_angle: float = 0.0
    resize_scale: float = 0.5

    def validate(self) -> None:
        if sorted(self.factor_order) != sorted(FACTORS):
            raise ValueError(f"factor_order must be a permutation of {FACTORS}")
        if not 0 <= self.edge_break_prob <= 1:
            raise ValueError("edge_break_prob must lie in [0, 1]")
        if not 0 < self.resize_scale <= 1:
            raise ValueError("resize_scale must lie in (0, 1]")
        if self.blur_length < 1 or self.noise_sigma < 0 or self.edge_blur_sigma < 0:
            raise ValueError("blur_length >= 1, noise_sigma >= 0 and edge_blur_sigma >= 0 required")
        lo, hi = self.blotch.count_range
        if lo < 0 or hi < lo:
            raise ValueError("bad blotch count_range")

    @classmethod
    def identity(cls, seed: int = 0) -> "DegradationRecipe":
        return cls(seed=seed, blotch=BlotchParams(count_range=(0, 0)), edge_blur_sigma=0.0,
                   edge_break_prob=0.0, noise_sigma=0.0, blur_length=1, resize_scale=1.0)

    def to_text(self) -> str:
        lines = [f"seed={self.seed}", f"factor_order={','.join(self.factor_order)}"]
        for f in fields(BlotchParams):
            lines.append(f"blotch.{f.name}={_fmt(getattr(self.blotch, f.name))}")
        for f in fields(self):
            if f.name not in ("seed", "factor_order", "blotch"):
                lines.append(f"{f.name}={_fmt(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DegradationRecipe":
        kv = {}
        for raw in text.splitlines():
            line = raw.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        blotch_kw = {}
        for f in fields(BlotchParams):
            key = f"blotch.{f.name}"
            if key in kv:
                blotch_kw[f.name] = _parse(kv.pop(key), getattr(BlotchParams(), f.name))
        kw: dict = {"blotch": BlotchParams(**blotch_kw)}
        if "factor_order" in kv:
            kw["factor_order"] = tuple(kv.pop("factor_order").split(","))
        default = cls()
        for k, v in kv.items():
            if not hasattr(default, k):
                raise ValueError(f"unknown recipe key {k!r}")
            kw[k] = _parse(v, getattr(default, k))
        r = cls(**kw)
        r.validate()
        return r


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse(text: str, like):
    if isinstance(like, tuple):
        return tuple(_parse(t, like[0]) for t in text.split(","))
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def factor_rngs(seed: int) -> dict[str, np.random.Generator]:
    """One independent generator per factor, so shuffling the order does not
    change what each factor draws."""
    children = np.random.SeedSequence(seed).spawn(len(FACTORS))
    return {name: np.random.default_rng(c) for name, c in zip(FACTORS, children)}


def apply_recipe(image: np.ndarray, recipe: DegradationRecipe) -> np.ndarray:
    recipe.validate()
    gray = to_grayscale(image)
    rngs = factor_rngs(recipe.seed)
    for name in recipe.factor_order:
        if name == "blotch":
            bp = recipe.blotch
            if bp.count_range[1] > 0:
                mask = low_detail_mask(gray, bp.var_window, bp.percentile)
                gray = synth_blotches(gray, mask, rngs[name], bp)
        elif name == "edge":
            gray = degrade_edges(gray, rngs[name], recipe.edge_blur_sigma,
                                 recipe.edge_break_prob, recipe.edge_max_shift)
        elif name == "noise":
            gray = add_gaussian_noise(gray, rngs[name], recipe.noise_sigma)
        elif name == "motion_blur":
            gray = motion_blur(gray, recipe.blur_length, recipe.blur_angle)
        elif name == "resize":
            if recipe.resize_scale < 1:
                gray = resize_cycle(gray, recipe.resize_scale)
    return np.clip(gray, 0.0, 1.0)


def sample_recipe(rng: np.random.Generator, seed: int, ranges: "RecipeRanges | None" = None) -> DegradationRecipe:
    """Draw per-image factor parameters from configured ranges, shuffled order."""
    r = ranges or RecipeRanges()
    order = tuple(FACTORS[i] for i in rng.permutation(len(FACTORS)))
    return DegradationRecipe(
        seed=seed,
        factor_order=order,
        blotch=BlotchParams(count_range=r.blotch_count, darkness_range=r.blotch_darkness),
        edge_blur_sigma=float(rng.uniform(*r.edge_blur_sigma)),
        edge_break_prob=float(rng.uniform(*r.edge_break_prob)),
        edge_max_shift=int(r.edge_max_shift),
        noise_sigma=float(rng.uniform(*r.noise_sigma)),
        blur_length=int(rng.integers(r.blur_length[0], r.blur_length[1] + 1)),
        blur_angle=float(rng.uniform(0, 180)),
        resize_scale=float(rng.uniform(*r.resize_scale)),
    )


@dataclass
class RecipeRanges:
    blotch_count: tuple[int, int] = (1, 4)
    blotch_darkness: tuple[float, float] = (0.25, 0.6)
    edge_blur_sigma: tuple[float, float] = (0.5, 1.5)
    edge_break_prob: tuple[float, float] = (0.1, 0.5)
    edge_max_shift: int = 2
    noise_sigma: tuple[float, float] = (0.01, 0.05)
    blur_length: tuple[int, int] = (1, 5)
    resize_scale: tuple[float, float] = (0.35, 0.75)

    @classmethod
    def from_dict(cls, kv: dict[str, str]) -> "RecipeRanges":
        base = cls()
        kw = {}
        for f in fields(cls):
            if f.name in kv:
                kw[f.name] = _parse(kv[f.name], getattr(base, f.name))
        return cls(**kw)

