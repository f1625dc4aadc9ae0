"""Adam with a per-epoch exponential learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from canm.errors import UsageError
from canm.network.configuration import TrainingConfig
from canm.tensor.module import Parameter


@dataclass
class OptimState:
    learning_rate: float = 1e-4
    decay: float = 0.988
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    epoch: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: Optional[TrainingConfig] = None) -> "OptimState":
        config = config or TrainingConfig()
        return cls(
            learning_rate=config.learning_rate,
            decay=config.lr_decay,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
        )

    @property
    def effective_lr(self) -> float:
        return self.learning_rate * self.decay**self.epoch


def adam_step(params: Iterable[tuple[str, Parameter]], state: OptimState) -> None:
    """One bias-corrected Adam update at ``state.effective_lr``."""
    params = list(params)
    for name, param in params:
        if param.grad is None:
            raise UsageError(f"adam_step: parameter '{name}' has no gradient")
    state.step += 1
    lr = state.effective_lr
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, param in params:
        g = param.grad
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data = (param.data - update).astype(param.dtype)
