"""Minimal reverse-mode autodiff over dense numpy arrays.

Just enough machinery for the losses in this package: every gradient here
factors through log-probabilities and value predictions of small MLPs, so the
op set is deliberately tiny (elementwise arithmetic, matmul, tanh/exp/log,
reductions, clipping, gather, and stop_gradient for detached terms). Not a
general-purpose framework.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteGradient


def _unbroadcast(grad, shape):
    # Sum out axes that numpy broadcasting introduced so grad matches shape.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Node:
    """One tape entry: a float64 array plus the closure that routes its grad."""

    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = wrap(other)
        out = Node(self.value + other.value, (self, other))
        out._backward = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Node(-self.value, (self,))
        out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other):
        return self + (-wrap(other))

    def __rsub__(self, other):
        return wrap(other) + (-self)

    def __mul__(self, other):
        other = wrap(other)
        out = Node(self.value * other.value, (self, other))
        out._backward = lambda g: (
            _unbroadcast(g * other.value, self.shape),
            _unbroadcast(g * self.value, other.shape),
        )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = wrap(other)
        out = Node(self.value / other.value, (self, other))
        out._backward = lambda g: (
            _unbroadcast(g / other.value, self.shape),
            _unbroadcast(-g * self.value / other.value**2, other.shape),
        )
        return out

    def __rtruediv__(self, other):
        return wrap(other) / self

    def __pow__(self, p):
        assert isinstance(p, (int, float))
        out = Node(self.value**p, (self,))
        out._backward = lambda g: (g * p * self.value ** (p - 1),)
        return out

    def __matmul__(self, other):
        other = wrap(other)
        out = Node(self.value @ other.value, (self, other))
        out._backward = lambda g: (g @ other.value.T, self.value.T @ g)
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None):
        out = Node(self.value.sum(axis=axis), (self,))

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), self.shape).copy(),)

        out._backward = backward
        return out

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)


def wrap(x):
    """Lift a constant into the tape (no gradient flows into constants by default)."""
    return x if isinstance(x, Node) else Node(x)


def tanh(x):
    x = wrap(x)
    t = np.tanh(x.value)
    out = Node(t, (x,))
    out._backward = lambda g: (g * (1.0 - t * t),)
    return out


def exp(x):
    x = wrap(x)
    e = np.exp(x.value)
    out = Node(e, (x,))
    out._backward = lambda g: (g * e,)
    return out


def log(x):
    x = wrap(x)
    out = Node(np.log(x.value), (x,))
    out._backward = lambda g: (g / x.value,)
    return out


def minimum(a, b):
    """Elementwise min. Ties route the gradient to the first argument."""
    a, b = wrap(a), wrap(b)
    take_a = a.value <= b.value
    out = Node(np.where(take_a, a.value, b.value), (a, b))
    out._backward = lambda g: (
        _unbroadcast(g * take_a, a.shape),
        _unbroadcast(g * ~take_a, b.shape),
    )
    return out


def maximum(a, b):
    a, b = wrap(a), wrap(b)
    take_a = a.value >= b.value
    out = Node(np.where(take_a, a.value, b.value), (a, b))
    out._backward = lambda g: (
        _unbroadcast(g * take_a, a.shape),
        _unbroadcast(g * ~take_a, b.shape),
    )
    return out


def clip(x, lo, hi):
    """Clamp to [lo, hi]; gradient passes only strictly inside the bounds."""
    x = wrap(x)
    inside = (x.value > lo) & (x.value < hi)
    out = Node(np.clip(x.value, lo, hi), (x,))
    out._backward = lambda g: (g * inside,)
    return out


def stop_gradient(x):
    """Pass the value through, contribute exactly zero gradient."""
    x = wrap(x)
    out = Node(x.value, (x,))
    out._backward = lambda g: (np.zeros(x.shape),)
    return out


def logsumexp(x, axis):
    """Numerically stable log-sum-exp along one axis (keeps the axis)."""
    x = wrap(x)
    m = x.value.max(axis=axis, keepdims=True)
    s = np.exp(x.value - m).sum(axis=axis, keepdims=True)
    lse = m + np.log(s)
    out = Node(lse, (x,))
    out._backward = lambda g: (g * np.exp(x.value - lse),)
    return out


def gather(x, indices, axis=1):
    """Select x[i, indices[i]] along axis 1 of a 2-D node."""
    assert axis == 1 and x.value.ndim == 2
    idx = np.asarray(indices, dtype=np.intp)
    rows = np.arange(x.value.shape[0])
    out = Node(x.value[rows, idx], (x,))

    def backward(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, (rows, idx), g)
        return (gx,)

    out._backward = backward
    return out


def where_keep(keep_mask, x):
    """Value of x everywhere; gradient flows only where keep_mask is True."""
    x = wrap(x)
    keep = np.asarray(keep_mask, dtype=bool)
    out = Node(x.value, (x,))
    out._backward = lambda g: (g * keep,)
    return out


def backward(loss, check_finite=True):
    """Accumulate gradients of a scalar loss into every reachable node.

    Returns nothing; read node.grad afterwards. Raises NonFiniteGradient if any
    accumulated gradient contains NaN/inf.
    """
    assert loss.value.ndim == 0, "backward() expects a scalar loss"
    order = []
    seen = set()

    def visit(node):
        stack = [(node, False)]
        while stack:
            n, expanded = stack.pop()
            if expanded:
                order.append(n)
                continue
            if id(n) in seen:
                continue
            seen.add(id(n))
            stack.append((n, True))
            for p in n.parents:
                stack.append((p, False))

    visit(loss)
    for n in order:
        n.grad = None
    loss.grad = np.ones(())
    for n in reversed(order):
        if n._backward is None or n.grad is None:
            continue
        for parent, g in zip(n.parents, n._backward(n.grad)):
            parent.grad = g if parent.grad is None else parent.grad + g
    for n in order:
        if n.grad is None:
            n.grad = np.zeros(n.shape)
        elif check_finite and not np.all(np.isfinite(n.grad)):
            raise NonFiniteGradient("non-finite gradient encountered on the tape")
