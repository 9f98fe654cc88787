"""Frame-to-event simulation and the direct event-integration baseline."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .events import EventStream
from .imageio import read_gray, read_manifest


@dataclass
class SimConfig:
    c_pos: float = 0.2
    c_neg: float = 0.2
    refractory: int = 0          # microseconds
    log_eps: float = 1e-3
    bandwidth_cutoff: float | None = None  # IIR coefficient in (0, 1]; None = unfiltered
    noise_rate: float = 0.0      # events / pixel / second
    threshold_jitter: float = 0.0

    def validate(self) -> None:
        if not (self.c_pos > 0 and self.c_neg > 0):
            raise ValueError("contrast thresholds must be positive")
        if self.noise_rate < 0 or self.threshold_jitter < 0 or self.refractory < 0:
            raise ValueError("noise_rate, threshold_jitter and refractory must be >= 0")
        if self.log_eps <= 0:
            raise ValueError("log_eps must be positive")
        if self.bandwidth_cutoff is not None and not 0 < self.bandwidth_cutoff <= 1:
            raise ValueError("bandwidth_cutoff must lie in (0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class FrameSequence:
    frames: list[np.ndarray]
    timestamps: list[int]

    def __post_init__(self):
        if len(self.frames) < 2 or len(self.frames) != len(self.timestamps):
            raise ValueError("need at least two frames with one timestamp each")
        shape = np.shape(self.frames[0])
        if any(np.shape(f) != shape for f in self.frames) or len(shape) != 2:
            raise ValueError("frames must be 2-D and share one shape")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return np.shape(self.frames[0])

    @classmethod
    def from_manifest(cls, path) -> "FrameSequence":
        entries = read_manifest(path)
        return cls([read_gray(p) for _, p in entries], [ts for ts, _ in entries])


def _crossings(l_ref: np.ndarray, l0: np.ndarray, l1: np.ndarray, c: np.ndarray, up: bool):
    """Number of reference levels crossed going from l0 to l1 (one direction)."""
    d = (l1 - l_ref) if up else (l_ref - l1)
    n = np.floor(d / c).astype(np.int64)
    n = np.maximum(n, 0)
    # floor() of a float ratio can be off by one at exact multiples
    sign = 1.0 if up else -1.0
    n = np.where(sign * (l_ref + sign * (n + 1) * c) <= sign * l1, n + 1, n)
    n = np.where((n > 0) & (sign * (l_ref + sign * n * c) > sign * l1), n - 1, n)
    return n


def simulate(seq: FrameSequence, cfg: SimConfig | None = None,
             rng: np.random.Generator | None = None) -> EventStream:
    """Emit an event each time a pixel's log intensity crosses its reference
    level by the contrast threshold; the reference then moves by exactly one
    threshold. Log intensity is linearly interpolated between frames."""
    cfg = cfg or SimConfig()
    cfg.validate()
    frames = [np.asarray(f, dtype=np.float64) for f in seq.frames]
    for i, f in enumerate(frames):
        if not np.all(np.isfinite(f)):
            raise ValueError(f"frame {i} contains non-finite values")
    h, w = seq.shape
    ts = np.asarray(seq.timestamps, dtype=np.int64)
    needs_rng = cfg.noise_rate > 0 or cfg.threshold_jitter > 0
    if needs_rng and rng is None:
        raise ValueError("a random generator is required for noise or threshold jitter")

    c_pos = np.full((h, w), cfg.c_pos)
    c_neg = np.full((h, w), cfg.c_neg)
    if cfg.threshold_jitter > 0:
        floor = 0.01 * min(cfg.c_pos, cfg.c_neg)
        c_pos = np.maximum(c_pos + rng.normal(0, cfg.threshold_jitter, (h, w)), floor)
        c_neg = np.maximum(c_neg + rng.normal(0, cfg.threshold_jitter, (h, w)), floor)

    logs = [np.log(f + cfg.log_eps) for f in frames]
    if cfg.bandwidth_cutoff is not None and cfg.bandwidth_cutoff < 1:
        a = cfg.bandwidth_cutoff
        filt = [logs[0]]
        for lg in logs[1:]:
            filt.append(filt[-1] + a * (lg - filt[-1]))
        logs = filt

    l_ref = logs[0].copy()
    xs, ys, tt, ps = [], [], [], []
    yy, xx = np.mgrid[0:h, 0:w]
    for k in range(1, len(logs)):
        l0, l1 = logs[k - 1], logs[k]
        t0, t1 = ts[k - 1], ts[k]
        slope = l1 - l0
        for up in (True, False):
            c = c_pos if up else c_neg
            n = _crossings(l_ref, l0, l1, c, up)
            sel = n > 0
            if not sel.any():
                continue
            counts = n[sel]
            rep = np.repeat(np.arange(counts.size), counts)
            j = np.arange(rep.size) - np.repeat(np.cumsum(counts) - counts, counts) + 1
            sign = 1.0 if up else -1.0
            level = l_ref[sel][rep] + sign * j * c[sel][rep]
            s = slope[sel][rep]
            # rounding in the accumulated reference can report a crossing on a
            # flat segment; such an event lands at the segment end
            frac = np.divide(level - l0[sel][rep], s, out=np.ones_like(s), where=s != 0)
            t = np.ceil(t0 + np.clip(frac, 0.0, 1.0) * (t1 - t0))
            t = np.clip(t, t0 + 1, t1).astype(np.int64)
            xs.append(xx[sel][rep]); ys.append(yy[sel][rep]); tt.append(t)
            ps.append(np.full(rep.size, 1 if up else -1, dtype=np.int8))
            l_ref[sel] += sign * counts * c[sel]

    if xs:
        x, y, t, p = (np.concatenate(v) for v in (xs, ys, tt, ps))
    else:
        x = y = t = np.zeros(0, dtype=np.int64)
        p = np.zeros(0, dtype=np.int8)

    if cfg.refractory > 0 and len(t):
        x, y, t, p = _apply_refractory(x, y, t, p, w, cfg.refractory)

    if cfg.noise_rate > 0:
        duration = float(ts[-1] - ts[0])
        n_noise = int(rng.poisson(cfg.noise_rate * h * w * duration * 1e-6))
        x = np.concatenate([x, rng.integers(0, w, n_noise)])
        y = np.concatenate([y, rng.integers(0, h, n_noise)])
        t = np.concatenate([t, rng.integers(ts[0] + 1, ts[-1] + 1, n_noise)])
        p = np.concatenate([p, rng.choice(np.array([-1, 1], dtype=np.int8), n_noise)])

    # deterministic tie-break: time, then pixel, then emission order
    order = np.lexsort((np.arange(len(t)), x, y, t))
    return EventStream(w, h, x[order], y[order], t[order], p[order])


def _apply_refractory(x, y, t, p, width, refractory):
    pix = y * width + x
    order = np.lexsort((t, pix))
    keep = np.zeros(len(t), dtype=bool)
    last_pix, last_t = -1, 0
    for i in order:
        if pix[i] != last_pix or t[i] - last_t >= refractory:
            keep[i] = True
            last_pix, last_t = pix[i], t[i]
    return x[keep], y[keep], t[keep], p[keep]


def integrate_events(stream: EventStream, c_pos: float, c_neg: float, init_log: np.ndarray,
                     timestamps: Sequence[int]) -> list[np.ndarray]:
    """Direct integration: add +c_pos / -c_neg per event to ``init_log`` and
    snapshot ``exp(log)`` after all events with ``t <= ts`` for each timestamp."""
    init_log = np.asarray(init_log, dtype=np.float64)
    if init_log.shape != (stream.height, stream.width):
        raise ValueError(f"init_log shape {init_log.shape} != sensor {(stream.height, stream.width)}")
    if np.any(np.diff(np.asarray(timestamps)) < 0):
        raise ValueError("snapshot timestamps must be non-decreasing")
    step = np.where(stream.p > 0, c_pos, -c_neg)
    out = []
    acc = init_log.copy()
    pos = 0
    for ts in timestamps:
        hi = int(np.searchsorted(stream.t, ts, side="right"))
        if hi > pos:
            np.add.at(acc, (stream.y[pos:hi], stream.x[pos:hi]), step[pos:hi])
            pos = hi
        out.append(np.exp(acc))
    return out
