"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Graph` records primitive operations as an ordered node list. Leaves
are either *inputs* (data, no gradient reported) or *params* (gradient
reported by :meth:`Graph.backward`). Values are bound at :meth:`Graph.forward`
time, so a graph describes a computation independently of the batch it is
evaluated on.

Example::

    g = Graph()
    x = g.param("x")
    y = g.mean(g.sigmoid(x))
    g.forward({"x": np.array([0.0])})   # -> array(0.5)
    g.backward(y)                       # -> {"x": array([0.25])}
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

__all__ = [
    "AutodiffError",
    "ShapeError",
    "NonFiniteError",
    "DomainError",
    "Graph",
    "Node",
    "graph_forward",
    "graph_backward",
]


class AutodiffError(ValueError):
    """Base error; ``node`` is the index of the offending node, if any."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message if node is None else f"node {node}: {message}")
        self.node = node


class ShapeError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


class DomainError(AutodiffError):
    pass


class Node:
    """Handle to one node of a :class:`Graph`."""

    __slots__ = ("graph", "index", "op", "inputs", "attr", "name")

    def __init__(self, graph: "Graph", index: int, op: str, inputs: tuple[int, ...],
                 attr=None, name: str | None = None):
        self.graph = graph
        self.index = index
        self.op = op
        self.inputs = inputs
        self.attr = attr
        self.name = name

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Node {self.index} {self.op}{label}>"

    def _lift(self, other) -> "Node":
        if isinstance(other, Node):
            return other
        return self.graph.const(other)

    def __add__(self, other):
        return self.graph.add(self, self._lift(other))

    def __radd__(self, other):
        return self.graph.add(self._lift(other), self)

    def __sub__(self, other):
        return self.graph.sub(self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.sub(self._lift(other), self)

    def __mul__(self, other):
        return self.graph.mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.graph.mul(self._lift(other), self)

    def __matmul__(self, other):
        return self.graph.matmul(self, other)

    def __neg__(self):
        return self.graph.neg(self)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


class Graph:
    """A recorded computation: leaves plus primitives in topological order.

    Nodes can only reference earlier nodes, so list order is a valid
    topological order by construction. A graph and its cached forward values
    belong to a single thread.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._consts: dict[int, np.ndarray] = {}
        self._values: list[np.ndarray] | None = None
        # Per-node visit counts of the most recent backward sweep.
        self.visit_counts: list[int] = []

    # -- leaves -----------------------------------------------------------

    def _append(self, op: str, inputs: tuple[Node, ...] = (), attr=None,
                name: str | None = None) -> Node:
        for node in inputs:
            if node.graph is not self:
                raise AutodiffError(f"{op}: operand belongs to another graph")
        node = Node(self, len(self.nodes), op, tuple(n.index for n in inputs), attr, name)
        self.nodes.append(node)
        self._values = None
        return node

    def input(self, name: str) -> Node:
        """Data leaf; bound at forward time, no gradient reported."""
        return self._append("input", name=name)

    def param(self, name: str) -> Node:
        """Parameter leaf; bound at forward time, gradient reported."""
        return self._append("param", name=name)

    def const(self, value) -> Node:
        node = self._append("const")
        self._consts[node.index] = np.asarray(value, dtype=np.float64)
        return node

    # -- primitives -------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        return self._append("add", (a, b))

    def sub(self, a: Node, b: Node) -> Node:
        return self._append("sub", (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        """Elementwise (broadcasting) product."""
        return self._append("mul", (a, b))

    def matmul(self, a: Node, b: Node, transpose_b: bool = False) -> Node:
        """``a @ b`` for 2-D operands, or ``a @ b.T`` with ``transpose_b``."""
        return self._append("matmul", (a, b), attr=transpose_b)

    def leaky_relu(self, a: Node, slope: float = 0.2) -> Node:
        return self._append("leaky_relu", (a,), attr=float(slope))

    def tanh(self, a: Node) -> Node:
        return self._append("tanh", (a,))

    def sigmoid(self, a: Node) -> Node:
        return self._append("sigmoid", (a,))

    def log(self, a: Node) -> Node:
        return self._append("log", (a,))

    def log_sigmoid(self, a: Node) -> Node:
        """``log(sigmoid(a))`` fused for numerical stability at large ``|a|``."""
        return self._append("log_sigmoid", (a,))

    def minimum(self, a: Node, c: float) -> Node:
        """``min(a, c)`` against a constant; subgradient 0 at ``a == c``."""
        return self._append("minimum", (a,), attr=float(c))

    def neg(self, a: Node) -> Node:
        return self._append("neg", (a,))

    def mean(self, a: Node) -> Node:
        """Mean over every element; yields a 0-d scalar."""
        return self._append("mean", (a,))

    # -- evaluation -------------------------------------------------------

    def forward(self, bindings: Mapping[str, np.ndarray], output: Node | None = None) -> np.ndarray:
        """Evaluate every node and cache the values; return ``output`` (default: last node)."""
        values: list[np.ndarray] = []
        with np.errstate(over="ignore", invalid="ignore"):
            self._forward_into(values, bindings)
        self._values = values
        if not values:
            raise AutodiffError("empty graph")
        return values[(output or self.nodes[-1]).index]

    def _forward_into(self, values: list[np.ndarray], bindings: Mapping[str, np.ndarray]) -> None:
        for node in self.nodes:
            if node.op in ("input", "param"):
                if node.name not in bindings:
                    raise AutodiffError(f"leaf {node.name!r} is not bound", node.index)
                val = np.asarray(bindings[node.name], dtype=np.float64)
            elif node.op == "const":
                val = self._consts[node.index]
            else:
                args = [values[i] for i in node.inputs]
                val = self._eval(node, args)
            if not np.isfinite(val).all():
                raise NonFiniteError(f"non-finite value produced by {node.op}", node.index)
            values.append(val)

    def _eval(self, node: Node, args: list[np.ndarray]) -> np.ndarray:
        op = node.op
        try:
            if op == "add":
                return args[0] + args[1]
            if op == "sub":
                return args[0] - args[1]
            if op == "mul":
                return args[0] * args[1]
            if op == "matmul":
                a, b = args
                if a.ndim != 2 or b.ndim != 2:
                    raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}", node.index)
                b = b.T if node.attr else b
                if a.shape[1] != b.shape[0]:
                    raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not chain", node.index)
                return a @ b
        except ValueError as exc:
            if isinstance(exc, AutodiffError):
                raise
            raise ShapeError(f"{op}: {exc}", node.index) from None
        (x,) = args
        if op == "leaky_relu":
            return np.where(x > 0, x, node.attr * x)
        if op == "tanh":
            return np.tanh(x)
        if op == "sigmoid":
            return _sigmoid(np.atleast_1d(x)).reshape(x.shape)
        if op == "log":
            if np.any(x <= 0):
                raise DomainError("log of non-positive value", node.index)
            return np.log(x)
        if op == "log_sigmoid":
            return _log_sigmoid(x)
        if op == "minimum":
            return np.minimum(x, node.attr)
        if op == "neg":
            return -x
        if op == "mean":
            if x.size == 0:
                raise ShapeError("mean of empty array", node.index)
            return np.asarray(x.mean())
        raise AutodiffError(f"unknown primitive {op!r}", node.index)

    def value(self, node: Node) -> np.ndarray:
        if self._values is None:
            raise AutodiffError("graph has not been evaluated")
        return self._values[node.index]

    def backward(self, output: Node | None = None) -> dict[str, np.ndarray]:
        """One reverse sweep from scalar ``output``; returns ``{param name: gradient}``.

        Parameters the output does not depend on get zero gradients.
        """
        if self._values is None:
            raise AutodiffError("backward called before forward")
        out = output or self.nodes[-1]
        values = self._values
        if values[out.index].size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {values[out.index].shape}", out.index)

        grads: list[np.ndarray | None] = [None] * (out.index + 1)
        grads[out.index] = np.ones_like(values[out.index])
        visits = [0] * len(self.nodes)
        for idx in range(out.index, -1, -1):
            g = grads[idx]
            if g is None:
                continue
            visits[idx] += 1
            node = self.nodes[idx]
            if not node.inputs:
                continue
            for i, local in zip(node.inputs, self._local_grads(node, g, values)):
                if local is None:
                    continue
                grads[i] = local if grads[i] is None else grads[i] + local
        self.visit_counts = visits

        # Leaves sharing a name are one parameter; their gradients add up.
        result: dict[str, np.ndarray] = {}
        for node in self.nodes:
            if node.op != "param":
                continue
            g = grads[node.index] if node.index < len(grads) else None
            if g is None:
                g = np.zeros_like(values[node.index])
            elif not np.isfinite(g).all():
                raise NonFiniteError("non-finite gradient", node.index)
            result[node.name] = g if node.name not in result else result[node.name] + g
        return result

    def _local_grads(self, node: Node, g: np.ndarray, values: list[np.ndarray]):
        op = node.op
        args = [values[i] for i in node.inputs]
        if op == "add":
            return _unbroadcast(g, args[0].shape), _unbroadcast(g, args[1].shape)
        if op == "sub":
            return _unbroadcast(g, args[0].shape), _unbroadcast(-g, args[1].shape)
        if op == "mul":
            a, b = args
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)
        if op == "matmul":
            a, b = args
            if node.attr:  # out = a @ b.T
                return g @ b, g.T @ a
            return g @ b.T, a.T @ g
        (x,) = args
        y = values[node.index]
        if op == "leaky_relu":
            return (g * np.where(x > 0, 1.0, node.attr),)
        if op == "tanh":
            return (g * (1.0 - y * y),)
        if op == "sigmoid":
            return (g * y * (1.0 - y),)
        if op == "log":
            return (g / x,)
        if op == "log_sigmoid":
            return (g * _sigmoid(np.atleast_1d(-x)).reshape(x.shape),)
        if op == "minimum":
            return (g * (x < node.attr),)
        if op == "neg":
            return (-g,)
        if op == "mean":
            return (np.full(x.shape, float(g) / x.size),)
        raise AutodiffError(f"no derivative rule for {op!r}", node.index)


def graph_forward(graph: Graph, bindings: Mapping[str, np.ndarray]) -> np.ndarray:
    return graph.forward(bindings)


def graph_backward(graph: Graph, output: Node | None = None) -> dict[str, np.ndarray]:
    return graph.backward(output)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad
