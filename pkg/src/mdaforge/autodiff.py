"""Minimal reverse-mode differentiation over dense float64 matrices.

Every value on a tape is a 2-d matrix; scalars are 1x1. Nodes are recorded
in creation order, which for eager forward construction is already a valid
topological order, so the backward pass simply walks the tape in reverse.
There is no broadcasting beyond row-bias addition: shape mismatches raise
immediately with both shapes in the message.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested primitive."""


class Node:
    """One matrix on the tape: value, gradient accumulator and backward rule."""

    __slots__ = ("value", "grad", "op", "parents", "backward_fn", "is_param")

    def __init__(self, value: np.ndarray, op: str, parents: tuple["Node", ...],
                 backward_fn: Callable[[np.ndarray], None] | None, is_param: bool):
        self.value = value
        self.grad: np.ndarray | None = None
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.is_param = is_param

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def __repr__(self) -> str:
        return f"Node({self.op}, shape={self.shape})"


def _as_matrix(x, op: str) -> np.ndarray:
    value = np.asarray(x, dtype=np.float64)
    if value.ndim != 2:
        raise ShapeError(f"{op}: expected a 2-d matrix, got shape {value.shape}")
    return value


class Tape:
    """Records one forward pass and differentiates a scalar loss on it."""

    def __init__(self) -> None:
        self._nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, value, op: str, parents: tuple[Node, ...],
                backward_fn: Callable[[np.ndarray], None] | None,
                is_param: bool = False) -> Node:
        value = _as_matrix(value, op)
        if not np.isfinite(value).all():
            raise FloatingPointError(f"{op}: non-finite entries in forward result")
        node = Node(value, op, parents, backward_fn, is_param)
        self._nodes.append(node)
        return node

    # ---- leaves ------------------------------------------------------

    def parameter(self, value) -> Node:
        """Leaf whose gradient is reported by backward()."""
        return self._record(value, "parameter", (), None, is_param=True)

    def constant(self, value) -> Node:
        """Leaf treated as data: gradients are accumulated but not reported."""
        return self._record(value, "constant", (), None)

    # ---- primitives --------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
        out = a.value @ b.value

        def backward(g, a=a, b=b):
            a.grad += g @ b.value.T
            b.grad += a.value.T @ g

        return self._record(out, "matmul", (a, b), backward)

    def add(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"add: {a.shape} vs {b.shape}")

        def backward(g, a=a, b=b):
            a.grad += g
            b.grad += g

        return self._record(a.value + b.value, "add", (a, b), backward)

    def add_row_bias(self, x: Node, bias: Node) -> Node:
        if bias.shape != (1, x.shape[1]):
            raise ShapeError(f"add_row_bias: x {x.shape}, bias {bias.shape}")

        def backward(g, x=x, bias=bias):
            x.grad += g
            bias.grad += g.sum(axis=0, keepdims=True)

        return self._record(x.value + bias.value, "add_row_bias", (x, bias), backward)

    def tanh(self, x: Node) -> Node:
        out = np.tanh(x.value)

        def backward(g, x=x, out=out):
            x.grad += g * (1.0 - out * out)

        return self._record(out, "tanh", (x,), backward)

    def relu(self, x: Node) -> Node:
        out = np.maximum(x.value, 0.0)

        def backward(g, x=x):
            x.grad += g * (x.value > 0.0)

        return self._record(out, "relu", (x,), backward)

    def log_softmax_rows(self, x: Node) -> Node:
        shifted = x.value - x.value.max(axis=1, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

        def backward(g, x=x, out=out):
            x.grad += g - np.exp(out) * g.sum(axis=1, keepdims=True)

        return self._record(out, "log_softmax_rows", (x,), backward)

    def scale(self, x: Node, factor) -> Node:
        """Multiply by a constant: a scalar, or an array of x's exact shape."""
        f = np.asarray(factor, dtype=np.float64)
        if f.ndim != 0 and f.shape != x.shape:
            raise ShapeError(f"scale: x {x.shape}, factor {f.shape}")

        def backward(g, x=x, f=f):
            x.grad += g * f

        return self._record(x.value * f, "scale", (x,), backward)

    def neg(self, x: Node) -> Node:
        def backward(g, x=x):
            x.grad -= g

        return self._record(-x.value, "neg", (x,), backward)

    def sum(self, x: Node) -> Node:
        def backward(g, x=x):
            x.grad += g[0, 0] * np.ones_like(x.value)

        return self._record([[x.value.sum()]], "sum", (x,), backward)

    def mean_all(self, x: Node) -> Node:
        def backward(g, x=x):
            x.grad += (g[0, 0] / x.value.size) * np.ones_like(x.value)

        return self._record([[x.value.mean()]], "mean_all", (x,), backward)

    def gather_rows(self, x: Node, rows: Sequence[int]) -> Node:
        idx = np.asarray(rows, dtype=np.intp)
        if idx.ndim != 1:
            raise ShapeError(f"gather_rows: indices must be 1-d, got shape {idx.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
            raise ShapeError(f"gather_rows: index out of range for {x.shape[0]} rows")

        def backward(g, x=x, idx=idx):
            np.add.at(x.grad, idx, g)

        return self._record(x.value[idx], "gather_rows", (x,), backward)

    def concat_rows(self, xs: Sequence[Node]) -> Node:
        if not xs:
            raise ShapeError("concat_rows: need at least one operand")
        width = xs[0].shape[1]
        for x in xs:
            if x.shape[1] != width:
                raise ShapeError(f"concat_rows: widths differ, {xs[0].shape} vs {x.shape}")
        out = np.vstack([x.value for x in xs])
        offsets = np.cumsum([0] + [x.shape[0] for x in xs])

        def backward(g, xs=tuple(xs), offsets=offsets):
            for x, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
                x.grad += g[lo:hi]

        return self._record(out, "concat_rows", tuple(xs), backward)

    def grl(self, x: Node, lam: float) -> Node:
        """Gradient reversal: identity forward, -lam times the gradient backward."""
        if lam < 0:
            raise ValueError(f"grl: lambda must be >= 0, got {lam}")

        def backward(g, x=x, lam=float(lam)):
            x.grad += -lam * g

        # x.value is passed through untouched, so the forward is bit-exact.
        return self._record(x.value, "grl", (x,), backward)

    def gaussian_kernel_mean(self, a: Node, b: Node, sigma: float) -> Node:
        """Mean of exp(-||a_i - b_j||^2 / (2 sigma^2)) over all row pairs.

        Fused primitive with an analytic backward rule; sigma is a constant
        with respect to gradients.
        """
        if a.shape[1] != b.shape[1]:
            raise ShapeError(f"gaussian_kernel_mean: widths differ, {a.shape} vs {b.shape}")
        if sigma <= 0:
            raise ValueError(f"gaussian_kernel_mean: sigma must be > 0, got {sigma}")
        av, bv = a.value, b.value
        sq = ((av * av).sum(axis=1)[:, None]
              + (bv * bv).sum(axis=1)[None, :]
              - 2.0 * (av @ bv.T))
        np.maximum(sq, 0.0, out=sq)
        kernel = np.exp(-sq / (2.0 * sigma * sigma))

        def backward(g, a=a, b=b, kernel=kernel, s2=float(sigma) ** 2):
            c = g[0, 0] / (kernel.size * s2)
            a.grad += c * (kernel @ b.value - kernel.sum(axis=1, keepdims=True) * a.value)
            b.grad += c * (kernel.T @ a.value - kernel.sum(axis=0)[:, None] * b.value)

        return self._record([[kernel.mean()]], "gaussian_kernel_mean", (a, b), backward)

    # ---- reverse pass --------------------------------------------------

    def backward(self, loss: Node) -> dict[Node, np.ndarray]:
        """Accumulate gradients of ``loss`` into every node on the tape.

        Gradients are zeroed first, so repeated calls give identical results.
        Returns the gradient map for parameter leaves.
        """
        if loss.shape != (1, 1):
            raise ShapeError(f"backward: loss must be 1x1, got {loss.shape}")
        for node in self._nodes:
            node.grad = np.zeros_like(node.value)
        loss.grad = np.ones((1, 1))
        for node in reversed(self._nodes):
            if node.backward_fn is not None:
                node.backward_fn(node.grad)
        return {node: node.grad for node in self._nodes if node.is_param}
