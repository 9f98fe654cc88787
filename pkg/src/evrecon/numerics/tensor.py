# Reverse-mode automatic differentiation over float64 numpy arrays.
# Each op records its parents and a closure that pushes the output gradient
# back to them; backward() replays the closures in reverse topological order.
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when an op receives operands whose shapes do not conform."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, name: str = "",
                 _parents: tuple["Tensor", ...] = (), op: str = "leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{rg})"

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, idx): return slice_(self, idx)

    def sum(self, axis=None, keepdims=False): return sum_(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)
    def sigmoid(self): return sigmoid(self)
    def tanh(self): return tanh(self)
    def relu(self): return relu(self)
    def exp(self): return exp(self)
    def square(self): return square(self)
    def abs(self): return abs_(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Build no graph inside the block; results are plain constants."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str,
          backward: Callable[[np.ndarray], None]) -> Tensor:
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=tuple(parents) if needs else (), op=op)
    if needs:
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ----------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _make(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _make(a.data - b.data, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), "mul", bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * out / b.data, b.shape))
    return _make(out, (a, b), "div", bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), "neg", lambda g: _accum(a, -g))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _stable_sigmoid(a.data)
    return _make(s, (a,), "sigmoid", lambda g: _accum(a, g * s * (1.0 - s)))


def blend(g, x, h) -> Tensor:
    """Convex blend ``g * x + (1 - g) * h`` for gates in [0, 1].

    The result is clamped to [min(x, h), max(x, h)] to absorb last-bit
    rounding, so the bound holds exactly; g = 1 and g = 0 return x and h
    bit for bit. Gradients are those of the unclamped expression.
    """
    g, x, h = as_tensor(g), as_tensor(x), as_tensor(h)
    if not (g.shape == x.shape == h.shape):
        raise ShapeError("blend", g.shape, x.shape, h.shape)
    raw = g.data * x.data + (1.0 - g.data) * h.data
    out = np.clip(raw, np.minimum(x.data, h.data), np.maximum(x.data, h.data))

    def bw(gr):
        _accum(g, gr * (x.data - h.data))
        _accum(x, gr * g.data)
        _accum(h, gr * (1.0 - g.data))
    return _make(out, (g, x, h), "blend", bw)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _make(t, (a,), "tanh", lambda g: _accum(a, g * (1.0 - t * t)))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), "relu", lambda g: _accum(a, g * mask))


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return _make(e, (a,), "exp", lambda g: _accum(a, g * e))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), "square", lambda g: _accum(a, 2.0 * g * a.data))


def abs_(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), "abs", lambda g: _accum(a, g * np.sign(a.data)))


# ------------------------------------------------------------------ reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accum(a, np.broadcast_to(g, a.shape))
    return _make(out, (a,), "sum", bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims) if axes else a.data.copy()

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accum(a, np.broadcast_to(g / n, a.shape))
    return _make(out, (a,), "mean", bw)


# ------------------------------------------------------------------- structure

def broadcast_to(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast", a.shape, shape) from None
    return _make(out, (a,), "broadcast", lambda g: _accum(a, _unbroadcast(g, a.shape)))


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return _make(out, (a,), "reshape", lambda g: _accum(a, g.reshape(a.shape)))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: no inputs")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ts[0].shape)) if i != ax):
            raise ShapeError("concat", ts[0].shape, t.shape)
    out = np.concatenate([t.data for t in ts], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[ax] = slice(lo, hi)
            _accum(t, g[tuple(idx)])
    return _make(out, ts, "concat", bw)


def slice_(a, idx) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data[idx]
    except IndexError as exc:
        raise ShapeError("slice", a.shape, (str(idx),)) from exc

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)
    return _make(np.array(out, copy=True), (a,), "slice", bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def bw(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
    return _make(out, (a, b), "matmul", bw)


# ---------------------------------------------------------------- convolution

def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    return (x[None], True) if x.ndim == 3 else (x, False)


def conv2d_direct(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Stride-1 'same' convolution by shift-and-accumulate over kernel taps.

    x is (N, H, W, Cin), w is (k, k, Cin, Cout). Cross-correlation convention,
    as in every deep learning framework.
    """
    k = w.shape[0]
    p = k // 2
    n, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    out = np.zeros((n, h, wd, w.shape[3]))
    for i in range(k):
        for j in range(k):
            out += xp[:, i:i + h, j:j + wd, :] @ w[i, j]
    return out


def conv2d_blocked(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Same result as conv2d_direct with a single GEMM over gathered patches."""
    k = w.shape[0]
    p = k // 2
    n, h, wd, cin = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # win: (N, H, W, Cin, k, k) -> (N*H*W, k*k*Cin) in (i, j, c) order
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, k * k * cin)
    return (cols @ w.reshape(k * k * cin, -1)).reshape(n, h, wd, -1)


def _conv_auto(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # patch GEMM wins only when the patch copy is cheap (few input channels)
    return conv2d_blocked(x, w) if w.shape[2] < 8 else conv2d_direct(x, w)


def _conv_grad_input(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    # correlation with the spatially flipped, channel-transposed kernel
    wf = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    return _conv_auto(g, wf)


def _conv_grad_kernel(x: np.ndarray, g: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    n, h, wd, cin = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    gw = np.empty((k, k, cin, g.shape[3]))
    g2 = g.reshape(-1, g.shape[3])
    for i in range(k):
        for j in range(k):
            gw[i, j] = xp[:, i:i + h, j:j + wd, :].reshape(-1, cin).T @ g2
    return gw


def conv2d(x, w, b=None, fast: bool = True) -> Tensor:
    """2D convolution, stride 1, zero padding preserving H x W.

    x: (H, W, Cin) or (N, H, W, Cin); w: (k, k, Cin, Cout) with odd k;
    b: optional (Cout,) bias. ``fast`` picks whichever kernel suits the
    channel count; ``fast=False`` forces the shift-and-accumulate path.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim not in (3, 4) or w.ndim != 4 or w.shape[0] != w.shape[1] \
            or w.shape[0] % 2 == 0 or x.shape[-1] != w.shape[2]:
        raise ShapeError("conv2d", x.shape, w.shape)
    xb, squeeze = _as_batch(x.data)
    out = (_conv_auto if fast else conv2d_direct)(xb, w.data)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[3],):
            raise ShapeError("conv2d", b.shape, (w.shape[3],))
        out = out + b.data
        parents.append(b)
    k = w.shape[0]

    def bw(g):
        gb = g[None] if squeeze else g
        if x.requires_grad:
            gx = _conv_grad_input(gb, w.data)
            _accum(x, gx[0] if squeeze else gx)
        if w.requires_grad:
            _accum(w, _conv_grad_kernel(xb, gb, k))
        if b is not None and b.requires_grad:
            _accum(b, gb.sum(axis=(0, 1, 2)))
    return _make(out[0] if squeeze else out, parents, "conv2d", bw)


# ------------------------------------------------------------- resampling

def downsample2(x) -> Tensor:
    """Nearest-neighbour 2x downsample (keeps the top-left sample of each 2x2)."""
    x = as_tensor(x)
    if x.ndim not in (3, 4) or x.shape[-3] % 2 or x.shape[-2] % 2:
        raise ShapeError("downsample2", x.shape)
    out = x.data[..., ::2, ::2, :]

    def bw(g):
        full = np.zeros_like(x.data)
        full[..., ::2, ::2, :] = g
        _accum(x, full)
    return _make(out.copy(), (x,), "downsample2", bw)


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) linear interpolation matrix, half-pixel centres, edge clamp."""
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m[np.arange(n_out), lo] += 1.0 - frac
    m[np.arange(n_out), hi] += frac
    return m


def upsample2(x) -> Tensor:
    """Bilinear 2x upsample of (..., H, W, C)."""
    x = as_tensor(x)
    if x.ndim not in (3, 4):
        raise ShapeError("upsample2", x.shape)
    h, w = x.shape[-3], x.shape[-2]
    mh, mw = bilinear_matrix(h, 2 * h), bilinear_matrix(w, 2 * w)
    out = _resample_cols(mw, _resample_rows(mh, x.data))

    def bw(g):
        _accum(x, _resample_rows(mh.T, _resample_cols(mw.T, g)))
    return _make(out, (x,), "upsample2", bw)


def _resample_rows(m: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Apply ``m`` along the H axis of (..., H, W, C)."""
    *lead, h, w, c = a.shape
    return (m @ a.reshape(*lead, h, w * c)).reshape(*lead, m.shape[0], w, c)


def _resample_cols(m: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Apply ``m`` along the W axis of (..., H, W, C)."""
    return np.swapaxes(_resample_rows(m, np.swapaxes(a, -3, -2)), -3, -2)


# ---------------------------------------------------------------- dispatcher

_OPS: dict[str, Callable[..., Tensor]] = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg,
    "matmul": matmul, "conv2d": conv2d, "sigmoid": sigmoid, "tanh": tanh,
    "relu": relu, "exp": exp, "blend": blend, "square": square, "abs": abs_,
    "mean": mean, "sum": sum_, "broadcast": broadcast_to, "reshape": reshape,
    "concat": lambda *ts, axis=-1: concat(ts, axis),
    "slice": slice_, "downsample2": downsample2, "upsample2": upsample2,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = _OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op {kind!r}") from None
    return fn(*inputs, **kwargs)


# -------------------------------------------------------------------- backward

def tape(root: Tensor) -> list[Tensor]:
    """Nodes reachable from root, parents before children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[str, np.ndarray]:
    """Backpropagate from a scalar loss.

    Gradients accumulate into ``.grad`` of every leaf with requires_grad;
    the returned mapping holds the named leaves' gradients.
    """
    if loss.size != 1:
        raise ShapeError("backward (loss must be scalar)", loss.shape)
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any trainable tensor")
    order = tape(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    _accum(loss, np.ones_like(loss.data))
    out: dict[str, np.ndarray] = {}
    for node in reversed(order):
        if node._backward is None:
            if node.name and node.grad is not None:
                out[node.name] = node.grad
            continue
        if node.grad is not None:
            node._backward(node.grad)
            node.grad = None
    return out


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
