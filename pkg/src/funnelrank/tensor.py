"""Dense float64 tensors with taped reverse-mode differentiation.

Every op checks its output for NaN/Inf and raises :class:`NonFiniteError`
naming the op, so numerical blowups surface at the node that produced them
instead of three layers later as a corrupted loss.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class NonFiniteError(ArithmeticError):
    """An op produced NaN or Inf on finite inputs."""


class GraphError(RuntimeError):
    """Backward requested on a tensor that records no computation."""


class Tensor:
    """A dense f64 array participating in a reverse-mode computation graph.

    Op outputs carry the op kind, their parent tensors, and a backward
    closure; together the reachable nodes form the graph. ``grad`` is
    allocated iff ``requires_grad`` and always matches ``data``'s shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, op: str | None = None,
                 parents: tuple["Tensor", ...] = (),
                 backward: Callable[[np.ndarray], None] | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.op = op
        self.parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = self.op or ("param" if self.requires_grad else "leaf")
        return f"Tensor(shape={self.shape}, op={tag!r})"

    # Arithmetic sugar; the module-level functions are the actual ops.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _node(data: np.ndarray, op: str, parents: tuple[Tensor, ...],
          backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"op '{op}' produced non-finite values")
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, needs, op=op, parents=parents,
                  backward=backward_fn if needs else None)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def back(g):
        _accum(a, g)
        _accum(b, g)

    return _node(a.data + b.data, "add", (a, b), back)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast add: (n, m) + (m,)."""
    if x.data.ndim != 2 or b.shape != (x.shape[1],):
        raise ShapeError(f"add_bias: {x.shape} vs {b.shape}")

    def back(g):
        _accum(x, g)
        _accum(b, g.sum(axis=0))

    return _node(x.data + b.data, "add_bias", (x, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")

    def back(g):
        _accum(a, g)
        _accum(b, -g)

    return _node(a.data - b.data, "sub", (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; one operand may be a (n, 1) column against (n, m)."""
    if a.shape != b.shape:
        col_ok = (a.data.ndim == 2 and b.data.ndim == 2
                  and a.shape[0] == b.shape[0] and 1 in (a.shape[1], b.shape[1]))
        if not col_ok:
            raise ShapeError(f"mul: {a.shape} vs {b.shape}")

    def back(g):
        ga = g * b.data
        gb = g * a.data
        if a.shape != g.shape:
            ga = ga.sum(axis=1, keepdims=True)
        if b.shape != g.shape:
            gb = gb.sum(axis=1, keepdims=True)
        _accum(a, ga)
        _accum(b, gb)

    return _node(a.data * b.data, "mul", (a, b), back)


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a constant array or scalar that never receives gradient."""
    c = np.asarray(c, dtype=np.float64)

    def back(g):
        ga = g * c
        if ga.shape != a.data.shape:
            ga = ga.reshape(a.data.shape)
        _accum(a, ga)

    return _node(a.data * c, "mul_const", (a,), back)


def affine(a: Tensor, scale: float, shift: float) -> Tensor:
    """scale * a + shift with python scalars; covers negation and (1 - x)."""

    def back(g):
        _accum(a, g * scale)

    return _node(a.data * scale + shift, "affine", (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} vs {b.shape}")

    def back(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, "matmul", (a, b), back)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along the feature axis (axis 1)."""
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat of zero tensors")
    rows = parts[0].shape[0]
    if any(p.data.ndim != 2 or p.shape[0] != rows for p in parts):
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}")
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[:, lo:hi])

    return _node(np.concatenate([p.data for p in parts], axis=1), "concat", parts, back)


def narrow_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"narrow_cols[{start}:{stop}] on {a.shape}")

    def back(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            a.grad += full

    return _node(np.ascontiguousarray(a.data[:, start:stop]), "narrow_cols", (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)

    def back(g):
        _accum(a, g * out * (1.0 - out))

    return _node(out, "sigmoid", (a,), back)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def back(g):
        _accum(a, g * (1.0 - out * out))

    return _node(out, "tanh", (a,), back)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def back(g):
        _accum(a, g * (a.data > 0.0))

    return _node(out, "relu", (a,), back)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), evaluated stably; gradient is sigmoid(x)."""
    out = np.logaddexp(0.0, a.data)

    def back(g):
        _accum(a, g * expit(a.data))

    return _node(out, "softplus", (a,), back)


def log(a: Tensor) -> Tensor:
    def back(g):
        _accum(a, g / a.data)

    return _node(np.log(a.data), "log", (a,), back)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only where the input lies inside."""
    inside = (a.data >= lo) & (a.data <= hi)

    def back(g):
        _accum(a, g * inside)

    return _node(np.clip(a.data, lo, hi), "clamp", (a,), back)


def softmax_rows(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows on {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        _accum(a, (g - dot) * out)

    return _node(out, "softmax_rows", (a,), back)


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        _accum(a, np.full_like(a.data, g.reshape(())))

    return _node(np.asarray(a.data.sum()), "sum_all", (a,), back)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def back(g):
        _accum(a, np.full_like(a.data, g.reshape(()) / n))

    return _node(np.asarray(a.data.mean()), "mean_all", (a,), back)


def topo_order(root: Tensor) -> list[Tensor]:
    """All graph nodes reachable from ``root``, parents before children.

    This materialises the computation graph as a topologically ordered list
    of op records; backward walks it in reverse, visiting each node once.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    ``loss`` must be scalar and must have been produced by an op. Leaf
    gradients accumulate across calls; interior node gradients are reset at
    the start of each pass.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.op is None:
        raise GraphError("backward on a detached tensor: no ops recorded")
    order = topo_order(loss)
    for node in order:
        if node.op is not None and node.grad is not None:
            node.grad[...] = 0.0
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad[...] = 1.0
    for node in reversed(order):
        if node._backward is not None and node.requires_grad:
            node._backward(node.grad)
