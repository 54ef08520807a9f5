"""A small reverse-mode differentiation engine over rank <= 2 float64 arrays.

Graphs are rebuilt for every utterance: each op returns a :class:`Tensor`
that remembers its parents and a closure mapping the output gradient to
parent gradients. :meth:`Tensor.backward` walks the tape in reverse
topological order.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from . import _kernels

_GRAD_ENABLED = True
_DTYPE = np.float64


class NonFiniteError(FloatingPointError):
    """A forward value became NaN or infinite."""


@contextlib.contextmanager
def extended_precision():
    """Evaluate forward passes in 80-bit extended precision, without a tape.

    Used by the finite-difference oracle; the recurrence falls back to a
    plain numpy loop since the compiled kernel is float64 only.
    """
    global _DTYPE
    prev = _DTYPE
    _DTYPE = np.longdouble
    try:
        with no_grad():
            yield
    finally:
        _DTYPE = prev


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents: Sequence["Tensor"] = (), backward_fn: Callable | None = None,
                 requires_grad: bool = False, name: str | None = None):
        value = np.asarray(value, dtype=_DTYPE)
        if value.ndim > 2:
            raise ValueError("tensors are limited to rank 2")
        if not np.isfinite(value).all():
            raise NonFiniteError(f"non-finite value in {name or 'tensor'}")
        self.value = value
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or bool(parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __len__(self) -> int:
        return self.value.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def tensor(x, name: str | None = None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, name=name)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _make(value, parents, backward_fn) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(value, parents, backward_fn)
    return Tensor(value)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _make(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.value.shape[-1] != b.value.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        av, bv = a.value, b.value
        if av.ndim == 1:
            ga = g @ bv.T
            gb = np.outer(av, g)
        else:
            ga = g @ bv.T
            gb = av.T @ g
        return ga, gb

    return _make(a.value @ b.value, (a, b), back)


def affine(x, weight, bias) -> Tensor:
    """``x @ weight + bias`` for a vector or a matrix of row vectors."""
    x, weight, bias = tensor(x), tensor(weight), tensor(bias)
    if x.value.shape[-1] != weight.value.shape[0]:
        raise ValueError(f"affine input size {x.value.shape[-1]} != weight rows {weight.value.shape[0]}")
    out = x.value @ weight.value + bias.value

    def back(g):
        if x.value.ndim == 1:
            return g @ weight.value.T, np.outer(x.value, g), g
        return g @ weight.value.T, x.value.T @ g, g.sum(axis=0)

    return _make(out, (x, weight, bias), back)


def tanh(x) -> Tensor:
    x = tensor(x)
    y = np.tanh(x.value)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x) -> Tensor:
    x = tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x) -> Tensor:
    x = tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.value)  # overflow surfaces as NonFiniteError
    return _make(y, (x,), lambda g: (g * y,))


def square(x) -> Tensor:
    x = tensor(x)
    return _make(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,))


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = tensor(x)
    return _make(np.array(x.value.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def sum_squared_error(pred, target) -> Tensor:
    """``sum((pred - target)**2)`` with a constant target, as one node."""
    pred = tensor(pred)
    target = np.asarray(target, dtype=_DTYPE)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: prediction {pred.shape} vs target {target.shape}")
    diff = pred.value - target
    return _make(np.array(np.dot(diff.ravel(), diff.ravel())), (pred,), lambda g: (2.0 * g * diff,))


# ---------------------------------------------------------------------------
# shape ops


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [tensor(p) for p in parts]
    values = [p.value for p in parts]
    out = np.concatenate(values, axis=axis)
    sizes = np.cumsum([v.shape[axis] for v in values])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(out, parts, back)


def getitem(x, index) -> Tensor:
    x = tensor(x)

    def back(g):
        out = np.zeros_like(x.value)
        np.add.at(out, index, g)
        return (out,)

    return _make(x.value[index], (x,), back)


def take_rows(x, rows) -> Tensor:
    """Gather rows of a matrix (or broadcast a vector) by integer index."""
    x = tensor(x)
    rows = np.asarray(rows, dtype=np.int64)
    if x.value.ndim == 1:
        out = np.broadcast_to(x.value, (rows.shape[0], x.value.shape[0])).copy()
        return _make(out, (x,), lambda g: (g.sum(axis=0),))

    def back(g):
        out = np.zeros_like(x.value)
        np.add.at(out, rows, g)
        return (out,)

    return _make(x.value[rows], (x,), back)


def reshape(x, shape) -> Tensor:
    x = tensor(x)
    return _make(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


# ---------------------------------------------------------------------------
# recurrence


def lstm_recurrence(xw, w_hh, resets=None, h0=None, c0=None) -> Tensor:
    """Run an LSTM layer given precomputed input projections.

    ``xw`` holds ``x_t @ W_ih + b`` for every step (n x 4H). When
    ``resets[t]`` is true the state entering step t is zeroed. Returns the
    hidden outputs (n x H).
    """
    xw, w_hh = tensor(xw), tensor(w_hh)
    n, g4 = xw.shape
    hidden = g4 // 4
    if w_hh.shape != (hidden, g4):
        raise ValueError(f"recurrent weight shape {w_hh.shape} != {(hidden, g4)}")
    resets = np.zeros(n, dtype=np.bool_) if resets is None else np.asarray(resets, dtype=np.bool_)
    h0 = tensor(np.zeros(hidden) if h0 is None else h0)
    c0 = tensor(np.zeros(hidden) if c0 is None else c0)
    if xw.value.dtype != np.float64:
        return Tensor(_lstm_forward_reference(xw.value, w_hh.value, resets, h0.value, c0.value))
    xv = np.ascontiguousarray(xw.value)
    wv = np.ascontiguousarray(w_hh.value)
    hs, cs, acts = _kernels.lstm_forward(xv, wv, resets, h0.value, c0.value)

    def back(g):
        return _kernels.lstm_backward(np.ascontiguousarray(g), hs, cs, acts, wv, resets, h0.value, c0.value)

    return _make(hs, (xw, w_hh, h0, c0), back)


def _lstm_forward_reference(xw, w_hh, resets, h0, c0):
    """Step-by-step numpy recurrence in the input dtype (forward only)."""
    H = w_hh.shape[0]
    # sigmoid(z) = 0.5 + 0.5 tanh(z / 2): one tanh call covers all four gates
    scale = np.full(4 * H, 0.5, dtype=xw.dtype)
    scale[2 * H:3 * H] = 1.0
    shift = 0.5 * (scale != 1.0)
    h, c = h0.copy(), c0.copy()
    out = np.empty((xw.shape[0], H), dtype=xw.dtype)
    for t in range(xw.shape[0]):
        if resets[t]:
            h = np.zeros_like(h)
            c = np.zeros_like(c)
        a = np.tanh((xw[t] + h @ w_hh) * scale) * scale + shift
        c = a[H:2 * H] * c + a[:H] * a[2 * H:3 * H]
        h = a[3 * H:] * np.tanh(c)
        out[t] = h
    return out
