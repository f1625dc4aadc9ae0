"""Differentiable operations.

Every function takes ``Tensor`` operands (plain numbers and arrays are
wrapped as constants), computes the forward value with numpy and records the
adjoint rule through ``make_result``. Convolutions follow the
cross-correlation convention.
"""

from __future__ import annotations

import contextvars
import math
from contextlib import contextmanager
from typing import Any, Iterator, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from canm.errors import NumericalError, ShapeError, UsageError
from canm.tensor.tensor import Tensor, make_result, verification_enabled


class MacCounter:
    """Running total of multiply-accumulates issued by matmul and conv2d."""

    def __init__(self) -> None:
        self.total = 0


_mac_counter: contextvars.ContextVar[Optional[MacCounter]] = contextvars.ContextVar(
    "canm_mac_counter", default=None
)


@contextmanager
def count_macs() -> Iterator[MacCounter]:
    counter = MacCounter()
    token = _mac_counter.set(counter)
    try:
        yield counter
    finally:
        _mac_counter.reset(token)


def _count(macs: int) -> None:
    counter = _mac_counter.get()
    if counter is not None:
        counter.total += int(macs)


# -- helpers -------------------------------------------------------------


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return Tensor(np.asarray(value, dtype=like.dtype))
    return Tensor(value)


def _pair(a: Any, b: Any) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    return Tensor(a), Tensor(b)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable") from None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _axes(axis: Any, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# -- elementwise ---------------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")

    def backward_fn(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), backward_fn, "add")


def sub(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")

    def backward_fn(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), backward_fn, "sub")


def mul(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")

    def backward_fn(g: np.ndarray):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), backward_fn, "mul")


def div(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "div")
    if verification_enabled() and np.any(b.data == 0):
        raise NumericalError(f"div: division by exact zero (divisor shape {b.shape})")

    def backward_fn(g: np.ndarray):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return make_result(a.data / b.data, (a, b), backward_fn, "div")


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return make_result(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)

    def backward_fn(g: np.ndarray):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return make_result(a.data**exponent, (a,), backward_fn, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,), "exp")


def absolute(a: Tensor) -> Tensor:
    """|a| with the sign subgradient (0 at 0)."""
    return make_result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def relu(a: Tensor) -> Tensor:
    return make_result(np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),), "relu")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))

    def backward_fn(g: np.ndarray):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
        return (g * (cdf + a.data * pdf),)

    return make_result(a.data * cdf, (a,), backward_fn, "gelu")


def sqrt_floor(a: Tensor, eps: float) -> Tensor:
    """max(sqrt(a), eps); the gradient is zero wherever the floor is active."""
    root = np.sqrt(np.maximum(a.data, 0.0))
    active = root > eps

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(g)
        grad[active] = g[active] * 0.5 / root[active]
        return (grad,)

    return make_result(np.where(active, root, eps), (a,), backward_fn, "sqrt_floor")


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "gelu": gelu,
    "relu": relu,
    "scale": scale,
    "pow": power,
}


def elementwise(op: str, *operands: Any) -> Tensor:
    """Dispatch one of add/sub/mul/div/gelu/relu/scale/pow by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise UsageError(f"Unknown elementwise op '{op}'. Available: {sorted(_ELEMENTWISE)}") from None
    return fn(*operands)


# -- reductions ----------------------------------------------------------


def sum(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(np.asarray(out), (x,), backward_fn, "sum")


def mean(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    axes = _axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


# -- shape manipulation --------------------------------------------------


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {tuple(shape)}") from None
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose")


def _is_basic_index(index: Any) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x: Tensor, index: Any) -> Tensor:
    out = np.array(x.data[index])
    basic = _is_basic_index(index)

    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(x.data)
        if basic:
            grad[index] = g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return make_result(out, (x,), backward_fn, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(out, tensors, backward_fn, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"stack: tensors must share a shape, got {shapes}") from None

    def backward_fn(g: np.ndarray):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(out, tensors, backward_fn, "stack")


def split(x: Tensor, sections: int, axis: int = 0) -> list[Tensor]:
    """Split into ``sections`` equal parts along ``axis``."""
    size = x.shape[axis]
    if size % sections:
        raise ShapeError(f"split: axis {axis} of shape {x.shape} is not divisible by {sections}")
    step = size // sections
    parts = []
    for i in range(sections):
        index = [slice(None)] * x.ndim
        index[axis] = slice(i * step, (i + 1) * step)
        parts.append(_slice(x, tuple(index)))
    return parts


def _slice(x: Tensor, index: tuple) -> Tensor:
    def backward_fn(g: np.ndarray):
        grad = np.zeros_like(x.data)
        grad[index] = g
        return (grad,)

    return make_result(np.ascontiguousarray(x.data[index]), (x,), backward_fn, "slice")


def pad(x: Tensor, widths: Sequence[tuple[int, int]]) -> Tensor:
    """Zero-pad every axis by (before, after)."""
    widths = [tuple(int(v) for v in w) for w in widths]
    index = tuple(slice(b, b + n) for (b, _), n in zip(widths, x.shape))
    return make_result(np.pad(x.data, widths), (x,), lambda g: (g[index],), "pad")


def roll(x: Tensor, shifts: Sequence[int], axes: Sequence[int]) -> Tensor:
    shifts, axes = tuple(shifts), tuple(axes)
    back = tuple(-s for s in shifts)
    out = np.roll(x.data, shifts, axis=axes)
    return make_result(out, (x,), lambda g: (np.roll(g, back, axis=axes),), "roll")


def take(x: Tensor, indices: np.ndarray) -> Tensor:
    """Gather entries of a 1-D tensor; the adjoint scatter-adds."""
    if x.ndim != 1:
        raise ShapeError(f"take: expected a 1-D tensor, got shape {x.shape}")
    indices = np.asarray(indices, dtype=np.intp)

    def backward_fn(g: np.ndarray):
        return (np.bincount(indices.ravel(), weights=g.ravel(), minlength=x.shape[0]).astype(x.dtype),)

    return make_result(x.data[indices], (x,), backward_fn, "take")


# -- linear algebra ------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product [..., M, K] @ [..., K, N]."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None
    out = np.matmul(a.data, b.data)
    _count(int(np.prod(out.shape[:-2], dtype=np.int64)) * a.shape[-2] * a.shape[-1] * b.shape[-1])

    def backward_fn(g: np.ndarray):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), backward_fn, "matmul")


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-stabilised softmax; entries where ``mask`` is False get exactly 0."""
    data = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), data.shape)
        if not np.all(mask.any(axis=axis)):
            raise UsageError("softmax: a row has no valid entries")
        data = np.where(mask, data, -np.inf)
    shifted = data - data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward_fn, "softmax")


# -- convolution ---------------------------------------------------------


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-D cross-correlation of [B, C, H, W] with [O, C/groups, kh, kw]."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    B, C, H, W = x.shape
    O, Cg, kh, kw = weight.shape
    if C % groups or O % groups or Cg != C // groups:
        raise ShapeError(
            f"conv2d: input {x.shape} and weight {weight.shape} do not fit groups={groups}"
        )
    if bias is not None and bias.shape != (O,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {O} output channels")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d: kernel {weight.shape[2:]} does not fit input {x.shape} with padding {padding}")
    _count(B * O * Ho * Wo * Cg * kh * kw)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    taps = [(i, j) for i in range(kh) for j in range(kw)]

    def tap(arr: np.ndarray, i: int, j: int) -> np.ndarray:
        return arr[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride]

    def col2im(dcols: np.ndarray) -> np.ndarray:
        # dcols: [B, Ho, Wo, C, kh, kw]
        dxp = np.zeros(xp.shape, dtype=x.dtype)
        for i, j in taps:
            tap(dxp, i, j)[...] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, padding : padding + H, padding : padding + W] if padding else dxp

    if groups == C and O == C and Cg == 1:
        w = weight.data[:, 0]
        out = np.zeros((B, O, Ho, Wo), dtype=x.dtype)
        for i, j in taps:
            out += tap(xp, i, j) * w[:, i, j][None, :, None, None]

        def inputs_backward(g: np.ndarray):
            dw = np.zeros_like(weight.data)
            dxp = np.zeros(xp.shape, dtype=x.dtype)
            for i, j in taps:
                dw[:, 0, i, j] = (g * tap(xp, i, j)).sum(axis=(0, 2, 3))
                tap(dxp, i, j)[...] += g * w[:, i, j][None, :, None, None]
            dx = dxp[:, :, padding : padding + H, padding : padding + W] if padding else dxp
            return dx, dw

    else:
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        # [B, Ho, Wo, C, kh, kw] flattened per group
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, groups, Cg * kh * kw)
        wmat = weight.data.reshape(groups, O // groups, Cg * kh * kw)
        out = np.empty((B * Ho * Wo, groups, O // groups), dtype=x.dtype)
        for grp in range(groups):
            out[:, grp] = cols[:, grp] @ wmat[grp].T
        out = out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

        def inputs_backward(g: np.ndarray):
            gmat = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, groups, O // groups)
            dw = np.empty_like(wmat)
            dcols = np.empty_like(cols)
            for grp in range(groups):
                dw[grp] = gmat[:, grp].T @ cols[:, grp]
                dcols[:, grp] = gmat[:, grp] @ wmat[grp]
            dx = col2im(dcols.reshape(B, Ho, Wo, C, kh, kw))
            return dx, dw.reshape(weight.shape)

    if bias is not None:
        out = out + bias.data.reshape(1, O, 1, 1)
    out = np.ascontiguousarray(out)

    parents: tuple[Tensor, ...] = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g: np.ndarray):
        dx, dw = inputs_backward(g)
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    return make_result(out, parents, backward_fn, "conv2d")


# -- resampling ----------------------------------------------------------


def avg_pool(x: Tensor, factor: int) -> Tensor:
    """Mean over non-overlapping factor x factor blocks."""
    B, C, H, W = x.shape
    if H % factor or W % factor:
        raise ShapeError(f"avg_pool: spatial size {(H, W)} is not divisible by {factor}")
    out = x.data.reshape(B, C, H // factor, factor, W // factor, factor).mean(axis=(3, 5))

    def backward_fn(g: np.ndarray):
        up = np.repeat(np.repeat(g, factor, axis=2), factor, axis=3)
        return (up / (factor * factor),)

    return make_result(out, (x,), backward_fn, "avg_pool")


def pixel_shuffle(x: Tensor, factor: int = 2) -> Tensor:
    """[B, C*f*f, H, W] -> [B, C, H*f, W*f], lossless rearrangement."""
    B, C, H, W = x.shape
    if C % (factor * factor):
        raise ShapeError(f"pixel_shuffle: {C} channels not divisible by {factor * factor}")
    Co = C // (factor * factor)
    out = (
        x.data.reshape(B, Co, factor, factor, H, W)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(B, Co, H * factor, W * factor)
    )

    def backward_fn(g: np.ndarray):
        grad = g.reshape(B, Co, H, factor, W, factor).transpose(0, 1, 3, 5, 2, 4).reshape(B, C, H, W)
        return (grad,)

    return make_result(out, (x,), backward_fn, "pixel_shuffle")


_RESAMPLE_MODES = ("avgpool_down2", "avgpool_down4", "pixel_shuffle_up2")


def resample(x: Tensor, mode: str) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"resample: expected [B, C, H, W], got {x.shape}")
    if mode == "avgpool_down2":
        return avg_pool(x, 2)
    if mode == "avgpool_down4":
        return avg_pool(x, 4)
    if mode == "pixel_shuffle_up2":
        return pixel_shuffle(x, 2)
    raise UsageError(f"Unknown resample mode '{mode}'. Available: {list(_RESAMPLE_MODES)}")
