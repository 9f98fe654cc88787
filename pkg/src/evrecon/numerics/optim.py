from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

# Optimizer hyperparameters used for the large-scale recipe.
DEFAULT_LR = 5e-6
DEFAULT_BETAS = (0.9, 0.999)


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        self.param = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


@dataclass
class AdamWState:
    lr: float = DEFAULT_LR
    beta1: float = DEFAULT_BETAS[0]
    beta2: float = DEFAULT_BETAS[1]
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState) -> dict[str, np.ndarray]:
    """One AdamW update with decoupled weight decay. Returns new parameter arrays.

    Every gradient is checked before any parameter moves, so a rejected step
    leaves both params and state untouched.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != param shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p_new = p * (1.0 - state.lr * state.weight_decay)
        p_new = p_new - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        out[name] = p_new
    return out


class AdamW:
    """Stateful wrapper that updates :class:`Tensor` parameters in place."""

    def __init__(self, params: dict[str, Tensor], lr: float = DEFAULT_LR,
                 betas: tuple[float, float] = DEFAULT_BETAS, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                weight_decay=weight_decay)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        new = adamw_step({k: p.data for k, p in self.params.items()}, grads, self.state)
        for k, p in self.params.items():
            p.data = new[k]
