"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(f: Callable[[], float], arr: np.ndarray, index: tuple, h: float = 1e-5) -> float:
    old = arr[index]
    arr[index] = old + h
    fp = f()
    arr[index] = old - h
    fm = f()
    arr[index] = old
    return (fp - fm) / (2.0 * h)


def rel_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
                    rng: np.random.Generator, n_samples: int = 4,
                    h: float = 1e-5) -> float:
    """Largest relative error between analytic and numeric partials.

    ``loss_fn`` must rebuild the graph from the current parameter data on
    every call. ``n_samples`` entries are drawn from each parameter.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    def scalar() -> float:
        return float(loss_fn().data)

    worst = 0.0
    for name, p in params.items():
        flat = rng.choice(p.size, size=min(n_samples, p.size), replace=False)
        for fi in flat:
            idx = np.unravel_index(fi, p.shape)
            num = numeric_grad(scalar, p.data, idx, h)
            worst = max(worst, rel_error(analytic[name][idx], num))
    return worst
