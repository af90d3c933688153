"""Adam with a linearly decaying learning rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from .core import Tensor


def linear_schedule(step: int, total_steps: int, warmup_steps: int = 0) -> float:
    """Learning-rate multiplier for the update with 0-based index ``step``.

    Ramps 0→1 over ``warmup_steps`` then decays linearly to exactly 0 at
    ``total_steps``.
    """
    if total_steps <= 0:
        raise ConfigurationError("total_steps must be positive for the linear schedule")
    if step < warmup_steps:
        return step / max(1, warmup_steps)
    return max(0.0, (total_steps - step) / max(1, total_steps - warmup_steps))


@dataclass
class OptimizerState:
    lr: float
    total_steps: int
    warmup_steps: int = 0
    step: int = 0
    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)


class Adam:
    def __init__(
        self,
        params: list[Tensor],
        lr: float = 2e-5,
        total_steps: int = 1,
        warmup_steps: int = 0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        max_grad_norm: float | None = None,
    ):
        if total_steps <= 0:
            raise ConfigurationError("total_steps must be positive")
        if warmup_steps < 0 or warmup_steps > total_steps:
            raise ConfigurationError("warmup_steps must lie in [0, total_steps]")
        self.params = list(params)
        self.betas = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.state = OptimizerState(
            lr=lr,
            total_steps=total_steps,
            warmup_steps=warmup_steps,
            first_moments=[np.zeros_like(p.data) for p in self.params],
            second_moments=[np.zeros_like(p.data) for p in self.params],
        )

    def current_lr(self) -> float:
        s = self.state
        return s.lr * linear_schedule(s.step, s.total_steps, s.warmup_steps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> float:
        """Apply one update and return the learning rate that was used."""
        s = self.state
        lr = self.current_lr()
        b1, b2 = self.betas
        t = s.step + 1
        clip = 1.0
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in self.params if p.grad is not None))
            if norm > self.max_grad_norm:
                clip = self.max_grad_norm / (norm + 1e-12)
        for p, m, v in zip(self.params, s.first_moments, s.second_moments):
            if p.grad is None:
                continue
            g = p.grad * clip if clip != 1.0 else p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)
        s.step = t
        return lr
