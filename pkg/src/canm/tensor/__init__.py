"""Dense tensors, reverse-mode autodiff and the differentiable op set."""

from canm.tensor.tensor import (
    Node,
    Tensor,
    backward,
    default_dtype,
    grad_enabled,
    no_grad,
    precision,
    verification,
    verification_enabled,
)
from canm.tensor import ops
from canm.tensor.ops import count_macs
from canm.tensor.module import Module, Parameter, initialize
from canm.tensor.io import load_tensor, save_tensor

__all__ = [
    "Module",
    "Node",
    "Parameter",
    "Tensor",
    "backward",
    "count_macs",
    "default_dtype",
    "grad_enabled",
    "initialize",
    "load_tensor",
    "no_grad",
    "ops",
    "precision",
    "save_tensor",
    "verification",
    "verification_enabled",
]
