"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Just enough machinery to train the recurrent models exactly: each op
records its parents and a closure that routes the output gradient back to
them.  Creation order is a valid topological order, but ``backward`` does
its own iterative traversal so partially used graphs also work.  Gradients
of shared parameters accumulate across every usage site (all time steps of
an unrolled sequence, all edges of a tree).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accum(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = backward
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    out._backward = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, (a, b))

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = backward
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Rows-in, rows-out affine map: y = x @ w.T (+ b)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError("linear expects 2-D input and weight")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(
            f"linear got input width {x.data.shape[1]} for weight {w.data.shape}")
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(y, parents)

    def backward(g):
        _accum(x, g @ w.data)
        _accum(w, g.T @ x.data)
        if b is not None:
            _accum(b, g.sum(axis=0))

    out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(s, (x,))

    def backward(g):
        _accum(x, g * s * (1.0 - s))

    out._backward = backward
    return out


def tanh(x: Tensor) -> Tensor:
    th = np.tanh(x.data)
    out = Tensor(th, (x,))

    def backward(g):
        _accum(x, g * (1.0 - th * th))

    out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), (x,))

    def backward(g):
        _accum(x, g * mask)

    out._backward = backward
    return out


def take(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows; the backward pass scatter-adds into the source."""
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx], (x,))

    def backward(g):
        acc = np.zeros_like(x.data)
        np.add.at(acc, idx, g)
        _accum(x, acc)

    out._backward = backward
    return out


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = Tensor(x.data.reshape(shape), (x,))

    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    out._backward = backward
    return out


def mean_axis(x: Tensor, axis: int) -> Tensor:
    out = Tensor(x.data.mean(axis=axis), (x,))
    n = x.data.shape[axis]

    def backward(g):
        _accum(x, np.repeat(np.expand_dims(g / n, axis), n, axis=axis))

    out._backward = backward
    return out


def sumsq(x: Tensor) -> Tensor:
    """Scalar sum of squares, the L2 penalty building block."""
    out = Tensor(np.sum(x.data * x.data), (x,))

    def backward(g):
        _accum(x, 2.0 * g * x.data)

    out._backward = backward
    return out


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if pred.data.shape != target.shape:
        raise ShapeError(f"mse got {pred.data.shape} prediction for {target.shape} target")
    diff = pred.data - target
    out = Tensor(np.mean(diff * diff), (pred,))

    def backward(g):
        _accum(pred, g * 2.0 * diff / diff.size)

    out._backward = backward
    return out


def bce_with_logits(logits: Tensor, target: np.ndarray) -> Tensor:
    """Numerically stable binary cross-entropy on logits."""
    target = np.asarray(target, dtype=np.float64)
    if logits.data.shape != target.shape:
        raise ShapeError(f"bce got {logits.data.shape} logits for {target.shape} target")
    z = logits.data
    loss = np.mean(np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z))))
    out = Tensor(loss, (logits,))

    def backward(g):
        p = 1.0 / (1.0 + np.exp(-z))
        _accum(logits, g * (p - target) / z.size)

    out._backward = backward
    return out


def backward(root: Tensor) -> None:
    """Reverse accumulation from a scalar root through the recorded graph."""
    if root.data.size != 1:
        raise ShapeError("backward needs a scalar root")
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
