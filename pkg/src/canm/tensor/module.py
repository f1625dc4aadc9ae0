"""Parameter containers with a flat, dotted-name registry."""

from __future__ import annotations

import logging
import zlib
from collections import OrderedDict
from typing import Any, Iterator, Optional

import numpy as np
from scipy.stats import truncnorm

from canm.errors import CheckpointError, UsageError
from canm.tensor.tensor import Tensor, default_dtype

logger = logging.getLogger(__name__)

INIT_SCHEMES = ("zeros", "ones", "trunc_normal")


class Parameter(Tensor):
    """A learnable leaf tensor. ``init`` names how ``initialize`` fills it."""

    def __init__(self, shape: tuple[int, ...], init: str = "trunc_normal", fill: Optional[float] = None):
        super().__init__(np.zeros(shape, dtype=default_dtype()), requires_grad=True)
        if init not in INIT_SCHEMES:
            raise UsageError(f"Unknown init scheme '{init}'. Available: {list(INIT_SCHEMES)}")
        self.init = init
        self.fill = fill


class Module:
    """Base class; attributes that are ``Parameter``, ``Module`` or lists of
    modules are registered in assignment order."""

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, child in enumerate(value):
                self._modules[f"{name}{i}"] = child
        object.__setattr__(self, name, value)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copy arrays into parameters. Everything is validated before any
        parameter is touched."""
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(f"Parameter names differ: missing={missing} unexpected={unexpected}")
        for name, param in own.items():
            if tuple(state[name].shape) != param.shape:
                raise CheckpointError(
                    f"Parameter '{name}' has shape {tuple(state[name].shape)}, expected {param.shape}"
                )
        for name, param in own.items():
            param.data = np.array(state[name], dtype=param.dtype)
            param.grad = None

    def macs(self, shape: tuple[int, ...]) -> int:
        """Analytic multiply-accumulate count for one forward at ``shape``."""
        return 0


def _param_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def initialize(module: Module, seed: int, std: float = 0.02) -> None:
    """Fill every parameter from its own seeded stream, so a parameter's
    value depends only on (seed, name)."""
    for name, param in module.named_parameters():
        if param.init == "zeros":
            value = np.zeros(param.shape)
        elif param.init == "ones":
            value = np.ones(param.shape)
        else:
            value = truncnorm.rvs(-2.0, 2.0, scale=std, size=param.shape, random_state=_param_rng(seed, name))
        if param.fill is not None:
            value = np.full(param.shape, param.fill)
        param.data = np.asarray(value, dtype=param.dtype).reshape(param.shape)
        param.grad = None
    logger.debug(f"initialized {module.num_parameters()} parameters with seed {seed}")
