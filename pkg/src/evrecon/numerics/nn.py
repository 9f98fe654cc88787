"""Parameter containers and small layers built on :mod:`evrecon.numerics.tensor`."""
from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from .tensor import Tensor, conv2d, matmul, relu


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Generator keyed by a 64-bit seed and a parameter name.

    Keying on the name makes initial values independent of construction order.
    """
    digest = hashlib.sha256(name.encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), key]))


def uniform_init(shape: tuple[int, ...], fan_in: int, seed: int, name: str) -> Tensor:
    a = np.sqrt(1.0 / fan_in)
    data = named_rng(seed, name).uniform(-a, a, size=shape)
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Walks attributes to collect parameters under dotted names."""

    def named_tensors(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        """Every tensor attribute, trainable or frozen."""
        for attr, val in vars(self).items():
            if attr.startswith("_"):
                continue
            path = f"{prefix}{attr}"
            if isinstance(val, Tensor):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_tensors(path + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_tensors(f"{path}.{i}.")

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        return ((k, t) for k, t in self.named_tensors(prefix) if t.requires_grad)

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_tensors()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        tensors = dict(self.named_tensors())
        missing = [k for k in tensors if k not in state]
        if strict and missing:
            raise KeyError(f"missing parameters: {', '.join(missing)}")
        for k, p in tensors.items():
            if k in state:
                if state[k].shape != p.shape:
                    raise ValueError(f"{k}: checkpoint shape {state[k].shape} != {p.shape}")
                p.data = np.array(state[k], dtype=np.float64, copy=True)

    def zero_grad(self) -> None:
        for _, p in self.named_tensors():
            p.grad = None

    def requires_grad_(self, flag: bool) -> "Module":
        for _, p in self.named_tensors():
            p.requires_grad = flag
        return self


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, seed: int, name: str):
        fan_in = k * k * cin
        self.w = uniform_init((k, k, cin, cout), fan_in, seed, name + ".w")
        self.b = uniform_init((cout,), fan_in, seed, name + ".b")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b)


class Linear(Module):
    def __init__(self, din: int, dout: int, seed: int, name: str):
        self.w = uniform_init((din, dout), din, seed, name + ".w")
        self.b = uniform_init((dout,), din, seed, name + ".b")

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.w) + self.b


class ConvRelu(Conv2d):
    def __call__(self, x: Tensor) -> Tensor:
        return relu(super().__call__(x))
