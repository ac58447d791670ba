"""A small reverse-mode automatic differentiation tape over numpy arrays.

Only the operations needed to train the Zubov network are provided.  Any
composition of them can be differentiated, including a computation that
itself contains a hand-written backward pass (the input gradient of an
MLP), which is how second-order parameter terms are obtained.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np


class Node:
    __slots__ = ("value", "grad", "parents", "requires_grad")
    # let numpy arrays defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, parents: Tuple[Tuple["Node", Callable], ...] = (),
                 requires_grad: Optional[bool] = None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p, _ in parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


def param(value) -> Node:
    """A leaf that collects gradients."""
    return Node(value, requires_grad=True)


def const(value) -> Node:
    return value if isinstance(value, Node) else Node(value, requires_grad=False)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(value, *links) -> Node:
    live = tuple((p, fn) for p, fn in links if p.requires_grad)
    return Node(value, live, requires_grad=bool(live))


def add(a, b) -> Node:
    a, b = const(a), const(b)
    return _make(a.value + b.value,
                 (a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(g, b.shape)))


def sub(a, b) -> Node:
    a, b = const(a), const(b)
    return _make(a.value - b.value,
                 (a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: -_unbroadcast(g, b.shape)))


def mul(a, b) -> Node:
    a, b = const(a), const(b)
    return _make(a.value * b.value,
                 (a, lambda g: _unbroadcast(g * b.value, a.shape)),
                 (b, lambda g: _unbroadcast(g * a.value, b.shape)))


def matmul(a, b) -> Node:
    a, b = const(a), const(b)
    return _make(a.value @ b.value,
                 (a, lambda g: g @ b.value.T),
                 (b, lambda g: a.value.T @ g))


def transpose(a) -> Node:
    a = const(a)
    return _make(a.value.T, (a, lambda g: g.T))


def tanh(a) -> Node:
    a = const(a)
    t = np.tanh(a.value)
    return _make(t, (a, lambda g: g * (1.0 - t * t)))


def square(a) -> Node:
    a = const(a)
    return _make(a.value * a.value, (a, lambda g: 2.0 * g * a.value))


def relu(a) -> Node:
    a = const(a)
    on = a.value > 0
    return _make(np.where(on, a.value, 0.0), (a, lambda g: np.where(on, g, 0.0)))


def sum_(a, axis=None, keepdims: bool = False) -> Node:
    a = const(a)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape)

    return _make(np.sum(a.value, axis=axis, keepdims=keepdims), (a, back))


def mean(a) -> Node:
    a = const(a)
    n = a.value.size
    return _make(np.mean(a.value), (a, lambda g: np.broadcast_to(g / n, a.shape)))


def rows(a, index) -> Node:
    """``a[index]`` along the first axis."""
    a = const(a)

    def back(g):
        out = np.zeros(a.shape)
        out[index] = g
        return out

    return _make(a.value[index], (a, back))


def concat_rows(parts: Sequence) -> Node:
    parts = [const(p) for p in parts]
    edges = np.cumsum([0] + [p.shape[0] for p in parts])
    links = [(p, (lambda g, s=s, e=e: g[s:e])) for p, s, e in zip(parts, edges[:-1], edges[1:])]
    return _make(np.concatenate([p.value for p in parts], axis=0), *links)


def backward(out: Node) -> None:
    """Accumulate ``d out / d leaf`` into ``leaf.grad`` for every leaf."""
    if out.value.size != 1:
        raise ValueError("backward needs a scalar output")
    order: List[Node] = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, _ in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads = {id(out): np.ones_like(out.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, fn in node.parents:
            pg = fn(g)
            k = id(p)
            grads[k] = pg if k not in grads else grads[k] + pg
