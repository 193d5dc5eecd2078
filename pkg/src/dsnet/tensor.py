"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every op returns a new :class:`Tensor`. When any input requires gradients the
output records its parents and a closure mapping the output gradient to the
input gradients; :func:`backward` walks that tape in reverse topological order.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, ContractViolation


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, _lift(other, self.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other, self.shape))

    def __rsub__(self, other):
        return sub(_lift(other, self.shape), self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _lift(value, shape):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(shape, float(value)))


_TAPE = {"enabled": True}


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (evaluation only)."""
    prev = _TAPE["enabled"]
    _TAPE["enabled"] = False
    try:
        yield
    finally:
        _TAPE["enabled"] = prev


def _node(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if _TAPE["enabled"] and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        for axis, (da, db) in enumerate(zip(a.shape, b.shape)):
            if da != db:
                raise ContractViolation(f"{op}: dimension {axis} differs ({da} vs {db})")
        raise ContractViolation(f"{op}: rank differs ({a.ndim} vs {b.ndim})")


# -- convolution -----------------------------------------------------------


@dataclass(frozen=True)
class Conv2dSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    dilation: int = 1
    padding: int = 0
    has_relu: bool = True

    def __post_init__(self):
        for field in ("in_channels", "out_channels", "kernel", "dilation"):
            if getattr(self, field) < 1:
                raise ConfigurationError(f"Conv2dSpec.{field} must be positive, got {getattr(self, field)}")
        if self.padding < 0:
            raise ConfigurationError(f"Conv2dSpec.padding must be non-negative, got {self.padding}")

    @classmethod
    def same(cls, in_channels, out_channels, kernel=3, dilation=1, has_relu=True):
        """Spec whose output has the input's spatial size (odd kernels only)."""
        if kernel % 2 == 0:
            raise ConfigurationError(f"same-size padding needs an odd kernel, got {kernel}")
        return cls(in_channels, out_channels, kernel, dilation, dilation * (kernel - 1) // 2, has_relu)

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)

    def output_hw(self, h, w):
        reach = self.dilation * (self.kernel - 1)
        return h + 2 * self.padding - reach, w + 2 * self.padding - reach


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, spec: Conv2dSpec) -> Tensor:
    """Stride-1 dilated 2-D cross-correlation.

    ``out[b, o, i, j] = bias[o] + sum_{c,p,q} w[o,c,p,q] * x[b, c, i + p*d - pad, j + q*d - pad]``
    with zero padding outside the input.
    """
    if x.ndim != 4:
        raise ContractViolation(f"conv2d: input must be 4-D (n, c, h, w), got shape {x.shape}")
    if weight.shape != spec.weight_shape:
        for axis, (got, want) in enumerate(zip(weight.shape, spec.weight_shape)):
            if got != want:
                raise ContractViolation(f"conv2d: weight dimension {axis} is {got}, spec requires {want}")
        raise ContractViolation(f"conv2d: weight shape {weight.shape} != {spec.weight_shape}")
    if x.shape[1] != spec.in_channels:
        raise ContractViolation(f"conv2d: input channel dimension is {x.shape[1]}, spec requires {spec.in_channels}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ContractViolation(f"conv2d: bias dimension 0 is {bias.shape}, spec requires ({spec.out_channels},)")

    n, _, h, w = x.shape
    oh, ow = spec.output_hw(h, w)
    if oh <= 0 or ow <= 0:
        raise ContractViolation(f"conv2d: {h}x{w} input too small for kernel {spec.kernel} dilation {spec.dilation}")
    k, d, p = spec.kernel, spec.dilation, spec.padding
    cols = kernels.im2col(x.data, k, d, p)
    w2 = weight.data.reshape(spec.out_channels, -1)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(n, spec.out_channels, oh, ow)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g = g.reshape(n, spec.out_channels, oh * ow)
        grads = []
        grads.append(kernels.col2im(np.ascontiguousarray(np.matmul(w2.T, g)), x.shape, k, d, p) if x.requires_grad else None)
        grads.append(np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape) if weight.requires_grad else None)
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    return _node(out, parents, backward)


# -- pooling ---------------------------------------------------------------


def max_pool_2x2(x: Tensor) -> Tensor:
    """Disjoint 2x2 max pooling; ties route the gradient to the first maximum."""
    if x.ndim != 4:
        raise ContractViolation(f"max_pool_2x2: input must be 4-D, got shape {x.shape}")
    h, w = x.shape[2:]
    if h % 2 or w % 2:
        raise ConfigurationError(f"max_pool_2x2 needs even spatial dims, got {h}x{w}")
    out, arg = kernels.maxpool2x2_forward(x.data)
    return _node(out, (x,), lambda g: [kernels.maxpool2x2_backward(np.ascontiguousarray(g), arg)])


def pool_bins(size: int, k: int) -> list[tuple[int, int]]:
    """Half-open bins ``[floor(i*size/k), floor((i+1)*size/k))`` partitioning ``range(size)``."""
    return [((i * size) // k, ((i + 1) * size) // k) for i in range(k)]


def adaptive_avg_pool(x: Tensor, k: int) -> Tensor:
    if x.ndim != 4:
        raise ContractViolation(f"adaptive_avg_pool: input must be 4-D, got shape {x.shape}")
    n, c, h, w = x.shape
    if k < 1 or k > h or k > w:
        raise ConfigurationError(f"adaptive_avg_pool: output size {k} must be in [1, min({h}, {w})]")
    rows, cols = pool_bins(h, k), pool_bins(w, k)
    out = np.empty((n, c, k, k))
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, :, i, j] = x.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def backward(g):
        dx = np.zeros(x.shape)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                dx[:, :, r0:r1, c0:c1] = (g[:, :, i, j] / ((r1 - r0) * (c1 - c0)))[:, :, None, None]
        return [dx]

    return _node(out, (x,), backward)


# -- elementwise -----------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: [g * mask])


def add(a: Tensor, b: Tensor) -> Tensor:
    check_same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: [g, g])


def sub(a: Tensor, b: Tensor) -> Tensor:
    check_same_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: [g, -g])


def mul(a: Tensor, b: Tensor) -> Tensor:
    check_same_shape(a, b, "mul")
    return _node(a.data * b.data, (a, b), lambda g: [g * b.data, g * a.data])


def scale(x: Tensor, c: float) -> Tensor:
    return _node(x.data * c, (x,), lambda g: [g * c])


def square(x: Tensor) -> Tensor:
    return _node(x.data * x.data, (x,), lambda g: [2.0 * x.data * g])


def absolute(x: Tensor) -> Tensor:
    """Elementwise |x| with subgradient 0 at x = 0."""
    return _node(np.abs(x.data), (x,), lambda g: [g * np.sign(x.data)])


def sum_all(x: Tensor) -> Tensor:
    return _node(np.array(x.data.sum()), (x,), lambda g: [np.full(x.shape, np.asarray(g).item())])


def add_scalars(terms: Sequence[Tensor]) -> Tensor:
    """Left-to-right sum of scalar tensors (fixed reduction order)."""
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return total


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ContractViolation("concat_channels: empty argument list")
    first = tensors[0]
    for t in tensors[1:]:
        if t.ndim != 4:
            raise ContractViolation(f"concat_channels: inputs must be 4-D, got shape {t.shape}")
        for axis in (0, 2, 3):
            if t.shape[axis] != first.shape[axis]:
                raise ContractViolation(
                    f"concat_channels: dimension {axis} differs ({t.shape[axis]} vs {first.shape[axis]})"
                )
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=1)
    return _node(out, tensors, lambda g: [g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors))])


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise ContractViolation(f"slice_channels: [{start}, {stop}) outside 0..{x.shape[1]}")

    def backward(g):
        dx = np.zeros(x.shape)
        dx[:, start:stop] = g
        return [dx]

    return _node(x.data[:, start:stop], (x,), backward)


# -- reverse pass ----------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> dict[str, Tensor]:
    """Backpropagate from a scalar ``loss``.

    Sets ``.grad`` (an ndarray, overwritten on each call) on every leaf that
    requires gradients and returns ``{name: Tensor(grad)}`` for the named
    leaves (the parameters). Gradients from multiple uses of one tensor within
    the graph are summed.
    """
    if loss.size != 1:
        raise ContractViolation(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    grads = {id(loss): np.ones(loss.shape)}
    named = {}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g
            if node.name is not None:
                named[node.name] = Tensor(node.grad)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return named
