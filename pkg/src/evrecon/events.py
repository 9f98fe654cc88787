"""Event data model, EVS1/CSV stream files, windowing, voxel grids and online
event corruption."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

MAGIC = b"EVS1"
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "i1")])
CSV_HEADER = "t,x,y,p"

DEFAULT_T_BINS = 5


class EventFormatError(ValueError):
    """Malformed event input. ``offset`` is a byte offset (binary) or line number (CSV)."""

    def __init__(self, msg: str, offset: int):
        self.offset = offset
        super().__init__(f"{msg} (at {offset})")


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: int


class EventStream:
    """Time-sorted events on a ``width x height`` sensor.

    Stored column-wise; ``x``/``y`` as int64, ``t`` in microseconds as int64,
    ``p`` as int8 in {+1, -1}.
    """

    __slots__ = ("width", "height", "x", "y", "t", "p")

    def __init__(self, width: int, height: int, x=(), y=(), t=(), p=(), *, validate: bool = True):
        self.width = int(width)
        self.height = int(height)
        self.x = np.asarray(x, dtype=np.int64).ravel()
        self.y = np.asarray(y, dtype=np.int64).ravel()
        self.t = np.asarray(t, dtype=np.int64).ravel()
        self.p = np.asarray(p, dtype=np.int8).ravel()
        if validate:
            self._validate()

    def _validate(self) -> None:
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns differ in length")
        if n == 0:
            return
        bad = np.flatnonzero((self.x < 0) | (self.x >= self.width) | (self.y < 0) | (self.y >= self.height))
        if bad.size:
            i = bad[0]
            raise ValueError(f"event {i} at ({self.x[i]}, {self.y[i]}) outside {self.width}x{self.height}")
        if not np.all(np.abs(self.p) == 1):
            raise ValueError("polarity must be +1 or -1")
        if np.any(np.diff(self.t) < 0):
            raise ValueError("timestamps must be non-decreasing")

    @classmethod
    def from_events(cls, width: int, height: int, events: Sequence[Event]) -> "EventStream":
        if not events:
            return cls(width, height)
        arr = np.array([(e.x, e.y, e.t, e.p) for e in events], dtype=np.int64)
        return cls.sorted(width, height, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    @classmethod
    def sorted(cls, width, height, x, y, t, p) -> "EventStream":
        t = np.asarray(t, dtype=np.int64)
        order = np.argsort(t, kind="stable")
        return cls(width, height, np.asarray(x)[order], np.asarray(y)[order], t[order], np.asarray(p)[order])

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in "xytp")

    def __repr__(self) -> str:
        return f"EventStream({self.width}x{self.height}, n={len(self)})"

    def take(self, mask_or_idx) -> "EventStream":
        return EventStream(self.width, self.height, self.x[mask_or_idx], self.y[mask_or_idx],
                           self.t[mask_or_idx], self.p[mask_or_idx], validate=False)

    @property
    def duration(self) -> int:
        return int(self.t[-1] - self.t[0]) if len(self) else 0


# ------------------------------------------------------------------- file I/O

def serialize(stream: EventStream) -> bytes:
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["x"], rec["y"], rec["t"], rec["p"] = stream.x, stream.y, stream.t, stream.p
    return HEADER.pack(MAGIC, stream.width, stream.height, len(stream)) + rec.tobytes()


def to_csv(stream: EventStream) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for x, y, t, p in zip(stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist()):
        out.write(f"{t},{x},{y},{p}\n")
    return out.getvalue()


def _check_records(x, y, p, width, height, offset_of) -> None:
    bad = np.flatnonzero((x >= width) | (y >= height))
    if bad.size:
        raise EventFormatError(f"coordinate ({x[bad[0]]}, {y[bad[0]]}) out of bounds", offset_of(bad[0]))
    bad = np.flatnonzero(np.abs(p.astype(np.int64)) != 1)
    if bad.size:
        raise EventFormatError(f"bad polarity {p[bad[0]]}", offset_of(bad[0]))


def parse_binary(blob: bytes) -> EventStream:
    if len(blob) < HEADER.size:
        raise EventFormatError("truncated header", len(blob))
    magic, width, height, count = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise EventFormatError(f"bad magic {magic!r}", 0)
    body = len(blob) - HEADER.size
    need = count * RECORD_DTYPE.itemsize
    if body < need:
        full = body // RECORD_DTYPE.itemsize
        raise EventFormatError(f"truncated record {full} of {count}",
                               HEADER.size + full * RECORD_DTYPE.itemsize)
    if body > need:
        raise EventFormatError("trailing bytes after last record", HEADER.size + need)
    rec = np.frombuffer(blob, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    _check_records(rec["x"], rec["y"], rec["p"], width, height,
                   lambda i: HEADER.size + int(i) * RECORD_DTYPE.itemsize)
    if np.any(rec["t"] > np.iinfo(np.int64).max):
        raise EventFormatError("timestamp exceeds int64 range", HEADER.size)
    return EventStream.sorted(width, height, rec["x"], rec["y"], rec["t"].astype(np.int64), rec["p"])


def parse_csv(lines, width: int, height: int) -> EventStream:
    if isinstance(lines, str):
        lines = lines.splitlines()
    rows: list[tuple[int, int, int, int]] = []
    linenos: list[int] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.replace(" ", "") == CSV_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise EventFormatError(f"expected 4 fields, got {len(parts)}", lineno)
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise EventFormatError(f"non-integer field in {line!r}", lineno) from None
        if x < 0 or y < 0 or t < 0:
            raise EventFormatError("negative field", lineno)
        rows.append((x, y, t, p))
        linenos.append(lineno)
    if not rows:
        return EventStream(width, height)
    arr = np.array(rows, dtype=np.int64)
    _check_records(arr[:, 0], arr[:, 1], arr[:, 3], width, height, lambda i: linenos[int(i)])
    return EventStream.sorted(width, height, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def parse_stream(data, width: int | None = None, height: int | None = None) -> EventStream:
    """Parse an EVS1 blob (``bytes``) or CSV text/lines (needs ``width``/``height``)."""
    if isinstance(data, (bytes, bytearray, memoryview)):
        data = bytes(data)
        if data[:4] == MAGIC or width is None:
            return parse_binary(data)
        data = data.decode()
    if width is None or height is None:
        raise ValueError("CSV input needs sensor width and height")
    return parse_csv(data, width, height)


def read_stream(path, width: int | None = None, height: int | None = None) -> EventStream:
    with open(path, "rb") as fh:
        blob = fh.read()
    return parse_stream(blob, width, height)


def write_stream(path, stream: EventStream) -> None:
    path = str(path)
    if path.endswith(".csv"):
        with open(path, "w") as fh:
            fh.write(to_csv(stream))
    else:
        with open(path, "wb") as fh:
            fh.write(serialize(stream))


# ------------------------------------------------------------------ windowing

def window(stream: EventStream, t0: int, dt: int) -> EventStream:
    """Events with ``t0 <= t < t0 + dt``."""
    if dt <= 0:
        raise ValueError("window length must be positive")
    lo = np.searchsorted(stream.t, t0, side="left")
    hi = np.searchsorted(stream.t, t0 + dt, side="left")
    return stream.take(slice(lo, hi))


def split_windows(stream: EventStream, dt: int, t0: int | None = None,
                  count: int | None = None) -> list[tuple[int, EventStream]]:
    """Consecutive windows of length ``dt`` starting at ``t0`` (default: first event)."""
    if len(stream) == 0 and count is None:
        return []
    if t0 is None:
        t0 = int(stream.t[0]) if len(stream) else 0
    if count is None:
        count = int((stream.t[-1] - t0) // dt) + 1
    return [(t0 + i * dt, window(stream, t0 + i * dt, dt)) for i in range(count)]


# ---------------------------------------------------------------- voxel grids

@dataclass
class VoxelGrid:
    data: np.ndarray  # (h, w, t_bins)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def t_bins(self) -> int:
        return self.data.shape[2]


def to_voxel_grid(stream: EventStream, t_bins: int = DEFAULT_T_BINS,
                  t_start: float | None = None, t_end: float | None = None) -> VoxelGrid:
    """Accumulate polarities into ``t_bins`` temporal bins with linear weights.

    Normalised time ``(t - t_start) / (t_end - t_start) * (t_bins - 1)`` places
    bin centres at 0..t_bins-1; each event splits its polarity between the two
    nearest centres. Bounds default to the first and last timestamps; a
    degenerate span puts every event in bin 0.
    """
    if t_bins < 1:
        raise ValueError("t_bins must be >= 1")
    grid = np.zeros((stream.height, stream.width, t_bins))
    if len(stream) == 0:
        return VoxelGrid(grid)
    if t_start is None:
        t_start = float(stream.t[0])
    if t_end is None:
        t_end = float(stream.t[-1])
    span = float(t_end) - float(t_start)
    if span > 0 and t_bins > 1:
        tn = (stream.t.astype(np.float64) - float(t_start)) / span * (t_bins - 1)
        tn = np.clip(tn, 0.0, t_bins - 1)
    else:
        tn = np.zeros(len(stream))
    lo = np.floor(tn).astype(np.int64)
    frac = tn - lo
    at_end = lo >= t_bins - 1
    lo[at_end] = t_bins - 1
    frac[at_end] = 0.0
    pol = stream.p.astype(np.float64)
    np.add.at(grid, (stream.y, stream.x, lo), pol * (1.0 - frac))
    hi = np.minimum(lo + 1, t_bins - 1)
    np.add.at(grid, (stream.y, stream.x, hi), pol * frac)
    return VoxelGrid(grid)


# ---------------------------------------------------------- online corruption

@dataclass(frozen=True)
class KillRect:
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)`` losing one polarity."""
    x0: int
    y0: int
    x1: int
    y1: int
    polarity: int


def sample_kill_rects(rng: np.random.Generator, width: int, height: int,
                      max_count: int = 3, max_frac: float = 0.25) -> list[KillRect]:
    rects = []
    for _ in range(int(rng.integers(0, max_count + 1))):
        rw = int(rng.integers(1, max(1, int(width * max_frac)) + 1))
        rh = int(rng.integers(1, max(1, int(height * max_frac)) + 1))
        x0 = int(rng.integers(0, width - rw + 1))
        y0 = int(rng.integers(0, height - rh + 1))
        rects.append(KillRect(x0, y0, x0 + rw, y0 + rh, int(rng.choice([-1, 1]))))
    return rects


def merge_adjacent(stream: EventStream, merge_window: int) -> EventStream:
    """Collapse same-pixel, same-polarity events closer than ``merge_window``
    to the first event of their run (which keeps its timestamp)."""
    if merge_window <= 0 or len(stream) < 2:
        return stream
    order = np.lexsort((np.arange(len(stream)), stream.t, stream.p, stream.x, stream.y))
    x, y, p, t = stream.x[order], stream.y[order], stream.p[order], stream.t[order]
    keep = np.ones(len(order), dtype=bool)
    same_group = (x[1:] == x[:-1]) & (y[1:] == y[:-1]) & (p[1:] == p[:-1])
    anchor = t[0]
    for i in range(1, len(order)):
        if same_group[i - 1] and t[i] - anchor < merge_window:
            keep[i] = False
        else:
            anchor = t[i]
    kept = np.sort(order[keep])
    return stream.take(kept)


def degrade_online(stream: EventStream, rng: np.random.Generator, merge_window: int = 0,
                   drop_prob: float = 0.0,
                   polarity_kill_rects: Sequence[KillRect] = ()) -> EventStream:
    """Training-time corruption: merge, then independent drop, then polarity kill."""
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError("drop_prob must lie in [0, 1]")
    out = merge_adjacent(stream, merge_window)
    if drop_prob > 0 and len(out):
        out = out.take(rng.random(len(out)) >= drop_prob)
    if polarity_kill_rects and len(out):
        dead = np.zeros(len(out), dtype=bool)
        for r in polarity_kill_rects:
            dead |= ((out.x >= r.x0) & (out.x < r.x1) & (out.y >= r.y0) & (out.y < r.y1)
                     & (out.p == r.polarity))
        out = out.take(~dead)
    return out
