"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation records its parent tensors and a backward rule at execution
time; creation order doubles as a topological order, so one `backward` call
walks the recorded graph exactly once in reverse and accumulates gradients
into the `.grad` buffers of everything that requires them.

Shape rules are deliberately small: elementwise ops require equal shapes or
a size-1 operand (scalar broadcast), matmul is strictly 2-D. Row and column
expansion is done explicitly with `ones` + matmul at call sites.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Sequence

import numpy as np

from . import special

__all__ = [
    "Tensor", "ShapeError", "DomainError", "no_grad", "constant", "param",
    "add", "sub", "mul", "div", "pow", "neg", "exp", "log", "tanh",
    "sigmoid", "softplus", "abs", "sum", "mean", "concat", "slice_last",
    "matmul", "transpose", "reshape", "lgamma", "digamma", "backward",
    "ones", "zeros",
]

class ShapeError(ValueError):
    """Operand shapes do not conform to the operation's shape rule."""


class DomainError(ValueError):
    """Input values fall outside the operation's mathematical domain."""


_node_ids = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_nid")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._nid = next(_node_ids)

    @classmethod
    def _from_op(cls, data, parents, backward_fn):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._nid = next(_node_ids)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- inspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, exponent):
        return pow(self, exponent)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum(self)

    def mean(self):
        return mean(self)


def constant(data) -> Tensor:
    """Leaf tensor that never receives gradients."""
    return Tensor(data)


def param(data) -> Tensor:
    """Leaf tensor that accumulates gradients (a trainable parameter)."""
    return Tensor(data, requires_grad=True)


def ones(*shape) -> Tensor:
    return Tensor(np.ones(shape))


def zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_elementwise(a: Tensor, b: Tensor) -> None:
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ShapeError(
        f"elementwise operands must share a shape or be scalar, "
        f"got {a.data.shape} and {b.data.shape}"
    )


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Only scalar-against-tensor broadcast exists, so the reduction is a
    # full sum back to the size-1 operand.
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape)


# -- elementwise arithmetic --------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b)

    def backward_fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor._from_op(a.data * b.data, (a, b), backward_fn)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b)
    if np.any(b.data == 0.0):
        raise ZeroDivisionError("division by zero tensor element")
    out = a.data / b.data

    def backward_fn(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * out / b.data, b.data.shape),
        )

    return Tensor._from_op(out, (a, b), backward_fn)


def pow(a, exponent: float) -> Tensor:
    a = _as_tensor(a)
    p = float(exponent)
    if p != int(p):
        if np.any(a.data <= 0.0):
            raise DomainError("fractional power requires strictly positive base")
    elif p < 0 and np.any(a.data == 0.0):
        raise ZeroDivisionError("negative power of zero")
    out = a.data ** p

    def backward_fn(g):
        return (g * p * a.data ** (p - 1.0),)

    return Tensor._from_op(out, (a,), backward_fn)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward_fn(g):
        return (-g,)

    return Tensor._from_op(-a.data, (a,), backward_fn)


# -- elementwise nonlinearities ----------------------------------------------

def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def backward_fn(g):
        return (g * out,)

    return Tensor._from_op(out, (a,), backward_fn)


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log requires strictly positive input")

    def backward_fn(g):
        return (g / a.data,)

    return Tensor._from_op(np.log(a.data), (a,), backward_fn)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def backward_fn(g):
        return (g * (1.0 - out * out),)

    return Tensor._from_op(out, (a,), backward_fn)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid(np.atleast_1d(a.data)).reshape(a.data.shape)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return Tensor._from_op(out, (a,), backward_fn)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), evaluated in the overflow-safe split form."""
    a = _as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward_fn(g):
        return (g * _sigmoid(np.atleast_1d(x)).reshape(x.shape),)

    return Tensor._from_op(out, (a,), backward_fn)


def abs(a) -> Tensor:
    """|x| with subgradient 0 at x = 0."""
    a = _as_tensor(a)
    sign = np.sign(a.data)

    def backward_fn(g):
        return (g * sign,)

    return Tensor._from_op(np.abs(a.data), (a,), backward_fn)


def lgamma(a) -> Tensor:
    """ln Gamma(x) elementwise for x > 0; derivative is digamma."""
    a = _as_tensor(a)
    out = np.asarray(special.lgamma(a.data), dtype=np.float64)

    def backward_fn(g):
        return (g * np.asarray(special.digamma(a.data), dtype=np.float64),)

    return Tensor._from_op(out, (a,), backward_fn)


def digamma(x):
    """Forward-only psi(x); exposed for diagnostics and gradient rules."""
    return special.digamma(x)


# -- reductions and structure ------------------------------------------------

def sum(a) -> Tensor:
    a = _as_tensor(a)

    def backward_fn(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor._from_op(np.sum(a.data), (a,), backward_fn)


def mean(a) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size

    def backward_fn(g):
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return Tensor._from_op(np.mean(a.data), (a,), backward_fn)


def concat(tensors: Sequence) -> Tensor:
    """Concatenate along the last axis."""
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty sequence")
    lead = ts[0].data.shape[:-1]
    if any(t.data.ndim == 0 for t in ts) or any(t.data.shape[:-1] != lead for t in ts):
        raise ShapeError("concat operands must agree on all but the last axis")
    widths = [t.data.shape[-1] for t in ts]
    offsets = np.cumsum([0] + widths)

    def backward_fn(g):
        return tuple(g[..., offsets[i]:offsets[i + 1]] for i in range(len(ts)))

    return Tensor._from_op(np.concatenate([t.data for t in ts], axis=-1), ts, backward_fn)


def slice_last(a, start: int, stop: int) -> Tensor:
    """Slice [start:stop] along the last axis."""
    a = _as_tensor(a)
    if a.data.ndim == 0:
        raise ShapeError("cannot slice a 0-d tensor")
    width = a.data.shape[-1]
    if not (0 <= start <= stop <= width):
        raise ShapeError(f"slice [{start}:{stop}] out of bounds for axis of size {width}")

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        return (full,)

    return Tensor._from_op(a.data[..., start:stop].copy(), (a,), backward_fn)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul requires two 2-D tensors")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )

    def backward_fn(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward_fn)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose requires a 2-D tensor")

    def backward_fn(g):
        return (g.T.copy(),)

    return Tensor._from_op(a.data.T.copy(), (a,), backward_fn)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"cannot reshape size {a.data.size} into {shape}")

    def backward_fn(g):
        return (g.reshape(a.data.shape),)

    return Tensor._from_op(a.data.reshape(shape).copy(), (a,), backward_fn)


# -- backward pass -----------------------------------------------------------

def _ancestors(root: Tensor) -> list[Tensor]:
    seen = {id(root)}
    stack = [root]
    nodes = [root]
    while stack:
        node = stack.pop()
        for parent in node._parents:
            if id(parent) not in seen:
                seen.add(id(parent))
                stack.append(parent)
                nodes.append(parent)
    nodes.sort(key=lambda t: t._nid)
    return nodes


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into `.grad` of every recorded tensor.

    Requires a single-element loss reachable from at least one tensor with
    requires_grad; repeated calls without `zero_grad` keep accumulating.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ShapeError("backward requires a scalar loss")
    if not loss.requires_grad:
        raise ValueError("loss is detached: no differentiable input reaches it")

    order = _ancestors(loss)
    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None or not node.requires_grad:
            continue
        if node.grad is None:
            node.grad = g.copy()
        else:
            node.grad = node.grad + g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            acc = flowing.get(id(parent))
            flowing[id(parent)] = pg if acc is None else acc + pg
