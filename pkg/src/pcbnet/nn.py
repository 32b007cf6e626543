"""Layers, initialization, Adam, and the linear learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (Tensor, add, binary_cross_entropy, cross_entropy,
                       grouped_cross_entropy, matmul, parameter, relu)
from .errors import ConfigError, OptimizerError

__all__ = [
    "LinearLayer", "FFNNHead", "Adam", "LinearSchedule", "schedule_lr",
    "cross_entropy", "binary_cross_entropy", "grouped_cross_entropy",
]


def kaiming_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class LinearLayer:
    """Affine map x @ W + b with parameters registered under ``path``."""

    def __init__(self, in_dim: int, out_dim: int, path: str, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = parameter(kaiming_uniform(rng, in_dim, (in_dim, out_dim)),
                                f"{path}.weight")
        self.bias = parameter(np.zeros(out_dim), f"{path}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def parameters(self) -> dict[str, Tensor]:
        return {self.weight.path: self.weight, self.bias.path: self.bias}


class FFNNHead:
    """Stack of linear layers with relu between them; final layer emits raw logits."""

    def __init__(self, in_dim: int, widths: list[int], path: str,
                 rng: np.random.Generator):
        self.widths = list(widths)
        self.layers: list[LinearLayer] = []
        prev = in_dim
        for i, w in enumerate(widths):
            self.layers.append(LinearLayer(prev, w, f"{path}.layer{i}", rng))
            prev = w

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for layer in self.layers:
            out.update(layer.parameters())
        return out


@dataclass
class LinearSchedule:
    """lr(step) = base_lr * (1 - step / total_steps), clamped at 0."""

    base_lr: float
    total_steps: int
    current_step: int = 0

    def __post_init__(self) -> None:
        if self.total_steps <= 0:
            raise ConfigError(f"total_steps must be positive, got {self.total_steps}")

    def lr_at(self, step: int) -> float:
        return max(self.base_lr * (1.0 - step / self.total_steps), 0.0)


def schedule_lr(schedule: LinearSchedule) -> float:
    """Learning rate at the schedule's current step."""
    return schedule.lr_at(schedule.current_step)


@dataclass
class Adam:
    """Standard Adam with bias correction; clears gradients after each step."""

    params: dict[str, Tensor]
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for path, p in self.params.items():
            self.m[path] = np.zeros_like(p.data)
            self.v[path] = np.zeros_like(p.data)

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        for path, p in self.params.items():
            if p.grad is None:
                raise OptimizerError(f"parameter {path!r} has no gradient")
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for path, p in self.params.items():
            g = p.grad
            self.m[path] = self.beta1 * self.m[path] + (1.0 - self.beta1) * g
            self.v[path] = self.beta2 * self.v[path] + (1.0 - self.beta2) * g * g
            m_hat = self.m[path] / bc1
            v_hat = self.v[path] / bc2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
            p.grad = None
