"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. Every differentiable operation in
``canm.tensor.ops`` records a ``Node`` holding its parents and an adjoint
closure; ``backward`` walks those nodes in reverse topological order.
"""

from __future__ import annotations

import contextvars
import logging
from contextlib import contextmanager
from typing import Any, Callable, Iterator, Optional, Sequence

import numpy as np

from canm.errors import NumericalError, UsageError

logger = logging.getLogger(__name__)

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "canm_grad_enabled", default=True
)
_verification: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "canm_verification", default=False
)
_default_dtype: contextvars.ContextVar[type] = contextvars.ContextVar(
    "canm_default_dtype", default=np.float64
)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def grad_enabled() -> bool:
    return _grad_enabled.get()


def verification_enabled() -> bool:
    return _verification.get()


def default_dtype() -> type:
    return _default_dtype.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording them."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@contextmanager
def verification(enabled: bool = True) -> Iterator[None]:
    """Assert finiteness after every operation while active."""
    token = _verification.set(enabled)
    try:
        yield
    finally:
        _verification.reset(token)


@contextmanager
def precision(dtype: type) -> Iterator[None]:
    """Select the dtype new tensors are created with (float64 or float32)."""
    if np.dtype(dtype) not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise UsageError(f"Unsupported precision {dtype}; use float64 or float32")
    token = _default_dtype.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _default_dtype.reset(token)


class Node:
    """One executed operation: its parents and the rule mapping the output
    gradient to parent gradients."""

    __slots__ = ("op", "parents", "backward")

    def __init__(self, op: str, parents: tuple["Tensor", ...], backward: BackwardFn):
        self.op = op
        self.parents = parents
        self.backward = backward


class Tensor:
    """N-dimensional real array with optional gradient tracking."""

    __array_priority__ = 1000

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Optional[type] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else default_dtype()
        self.data: np.ndarray = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    @property
    def op(self) -> Optional[str]:
        return None if self._node is None else self._node.op

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar; implementations live in canm.tensor.ops -----------

    def __add__(self, other: Any) -> "Tensor":
        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return ops.div(other, self)

    def __neg__(self) -> "Tensor":
        return ops.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return ops.power(self, exponent)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return ops.getitem(self, index)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return ops.transpose(self, axes if axes else None)

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return ops.mean(self, axis=axis, keepdims=keepdims)


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Wrap an op output, attaching a graph node when any parent is tracked."""
    if verification_enabled():
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"Operation '{op}' produced non-finite values")
        logger.debug(f"verified {op} -> {data.shape}")
    out = Tensor(data, dtype=data.dtype)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op, tuple(parents), backward_fn)
    return out


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        stack.append((tensor, True))
        if tensor._node is not None:
            for parent in reversed(tensor._node.parents):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dLeaf into ``grad`` of every reachable tracked leaf."""
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise UsageError("backward() needs a tensor that tracks gradients")
    if loss.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")

    order = _topological_order(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(order):
        grad = pending.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor._node is None:
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
            continue
        parent_grads = tensor._node.backward(grad)
        for parent, parent_grad in zip(tensor._node.parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad


from canm.tensor import ops  # noqa: E402  (ops needs Tensor defined first)
