"""Reverse-mode differentiation over numpy arrays.

Every complex quantity in the model is carried as a pair of real tensors, so
the engine only needs real-valued primitives. A forward pass builds a graph of
:class:`Tensor` nodes; :func:`backward` walks it in reverse topological order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

__all__ = [
    "Tensor",
    "Tape",
    "Parameter",
    "RMSprop",
    "as_tensor",
    "backward",
    "clip_grad_norm",
    "concat",
    "stack",
    "rmsprop_step",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    # make numpy defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, parents=(), op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = None

    # -- construction helpers ------------------------------------------------

    @classmethod
    def _node(cls, data, parents, op, backward_fn):
        parents = tuple(parents)
        needs = any(p.requires_grad for p in parents)
        out = cls(data, requires_grad=needs, parents=parents if needs else (), op=op)
        if needs:
            out._backward = backward_fn
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    # -- elementwise arithmetic ------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def bw(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return Tensor._node(self.data + other.data, (self, other), "add", bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)

        def bw(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)

        return Tensor._node(self.data - other.data, (self, other), "sub", bw)

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def bw(g):
            return _unbroadcast(g * b, self.shape), _unbroadcast(g * a, other.shape)

        return Tensor._node(a * b, (self, other), "mul", bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def bw(g):
            return (
                _unbroadcast(g / b, self.shape),
                _unbroadcast(-g * a / (b * b), other.shape),
            )

        return Tensor._node(a / b, (self, other), "div", bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return Tensor._node(-self.data, (self,), "neg", lambda g: (-g,))

    def __pow__(self, exponent: float):
        x = self.data

        def bw(g):
            return (g * exponent * x ** (exponent - 1),)

        return Tensor._node(x**exponent, (self,), "pow", bw)

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def bw(g):
            ga = g @ np.swapaxes(b, -1, -2) if b.ndim > 1 else np.multiply.outer(g, b)
            gb = np.swapaxes(a, -1, -2) @ g if a.ndim > 1 else np.multiply.outer(a, g)
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor._node(a @ b, (self, other), "matmul", bw)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # -- unary maps ------------------------------------------------------------

    def exp(self):
        y = np.exp(self.data)
        return Tensor._node(y, (self,), "exp", lambda g: (g * y,))

    def log(self):
        x = self.data
        return Tensor._node(np.log(x), (self,), "log", lambda g: (g / x,))

    def tanh(self):
        y = np.tanh(self.data)
        return Tensor._node(y, (self,), "tanh", lambda g: (g * (1.0 - y * y),))

    def sigmoid(self):
        y = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        return Tensor._node(y, (self,), "sigmoid", lambda g: (g * y * (1.0 - y),))

    def relu(self):
        keep = self.data > 0
        return Tensor._node(self.data * keep, (self,), "relu", lambda g: (g * keep,))

    def abs(self):
        # subgradient at 0 is 0
        s = np.sign(self.data)
        return Tensor._node(np.abs(self.data), (self,), "abs", lambda g: (g * s,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return Tensor._node(y, (self,), "sqrt", lambda g: (g * 0.5 / y,))

    def cos(self):
        x = self.data
        return Tensor._node(np.cos(x), (self,), "cos", lambda g: (-g * np.sin(x),))

    def sin(self):
        x = self.data
        return Tensor._node(np.sin(x), (self,), "sin", lambda g: (g * np.cos(x),))

    def square(self):
        x = self.data
        return Tensor._node(x * x, (self,), "square", lambda g: (2.0 * g * x,))

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._node(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", bw)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis: int):
        """Max along ``axis``; the gradient goes to the first maximal entry only."""
        x = self.data
        idx = np.expand_dims(np.argmax(x, axis=axis), axis)
        y = np.take_along_axis(x, idx, axis=axis).squeeze(axis)

        def bw(g):
            out = np.zeros_like(x)
            np.put_along_axis(out, idx, np.expand_dims(g, axis), axis=axis)
            return (out,)

        return Tensor._node(y, (self,), "max", bw)

    def norm(self, axis=-1):
        """L2 norm along ``axis``; gradient defined as 0 at the origin."""
        x = self.data
        n = np.sqrt((x * x).sum(axis=axis))

        def bw(g):
            nk = np.expand_dims(n, axis)
            safe = np.where(nk > 0, nk, 1.0)
            return (np.expand_dims(g, axis) * np.where(nk > 0, x / safe, 0.0),)

        return Tensor._node(n, (self,), "norm", bw)

    # -- shape manipulation ----------------------------------------------------

    def reshape(self, *shape):
        old = self.shape
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Tensor._node(
            self.data.reshape(shape), (self,), "reshape", lambda g: (g.reshape(old),)
        )

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return Tensor._node(
            self.data.transpose(axes), (self,), "transpose", lambda g: (g.transpose(inv),)
        )

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, key):
        shape = self.shape

        def bw(g):
            out = np.zeros(shape)
            np.add.at(out, key, g)
            return (out,)

        return Tensor._node(self.data[key], (self,), "getitem", bw)

    def unsqueeze(self, axis):
        return self.reshape(np.expand_dims(self.data, axis).shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._node(data, tensors, "concat", bw)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    data = np.stack([t.data for t in tensors], axis=axis)
    return Tensor._node(data, tensors, "stack", bw)


# -- tape & backward -----------------------------------------------------------


@dataclass
class Tape:
    """Nodes reachable from ``root`` in topological order (inputs first)."""

    root: Tensor
    nodes: list = field(default_factory=list)
    leaves: dict = field(default_factory=dict)  # parameter name -> leaf tensor

    @classmethod
    def record(cls, root: Tensor) -> "Tape":
        order, seen = [], set()
        stack_ = [(root, False)]
        while stack_:
            node, done = stack_.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack_.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack_.append((p, False))
        return cls(root, order)

    def check_finite(self):
        """Raise naming the first op (in evaluation order) that produced a non-finite value."""
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.data)):
                raise NumericalError(f"non-finite value produced by op '{node.op}' (node {i})")


def backward(tape: Tape) -> None:
    """Accumulate d(root)/d(node) into ``.grad`` for every node that requires it."""
    root = tape.root
    for node in tape.nodes:
        node.grad = None
    root.grad = np.ones_like(root.data)
    for node in reversed(tape.nodes):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


# -- parameters & optimisation -------------------------------------------------

FREE = "free"
UNIT_NORM_MODULI = "unit-norm-moduli"
FROZEN = "frozen"


@dataclass
class Parameter:
    value: np.ndarray
    constraint: str = FREE
    grad: np.ndarray | None = None
    # rows whose gradient is always zeroed (e.g. the PAD embedding row)
    frozen_rows: tuple = ()

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    @property
    def trainable(self) -> bool:
        return self.constraint != FROZEN


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float((p.grad**2).sum()) for p in params)))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad = p.grad * scale
    return total


@dataclass
class RMSprop:
    lr: float = 0.001
    decay: float = 0.9
    eps: float = 1e-8
    state: dict = field(default_factory=dict)

    def step(self, params: dict) -> None:
        for name, p in params.items():
            if not p.trainable:
                continue
            acc = self.state.get(name)
            if acc is None:
                acc = np.zeros_like(p.value)
            acc = self.decay * acc + (1.0 - self.decay) * p.grad**2
            self.state[name] = acc
            p.value = p.value - self.lr * p.grad / np.sqrt(acc + self.eps)


def rmsprop_step(value, grad, acc, lr, decay=0.9, eps=1e-8):
    """Single functional RMSprop update; returns ``(new_value, new_acc)``."""
    acc = decay * acc + (1.0 - decay) * grad**2
    return value - lr * grad / np.sqrt(acc + eps), acc
