"""
Dense tensor computation graph with reverse-mode differentiation.

A :class:`Graph` is an append-only list of nodes. Each primitive computes its
forward value eagerly and records a vector-Jacobian product closure, so a
node's parents always have smaller indices and :meth:`Graph.backward` is a
single reverse sweep over the list.

The primitives cover the softmax-regression and tanh-MLP losses, their
closed-form parameter gradients and the trajectory-matching objective over
an unrolled chain of SGD steps.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import GraphError

logger = logging.getLogger(__name__)


class Tensor:
    """Immutable float64 array with finite entries."""

    __slots__ = ('data',)

    def __init__(self, data):
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise GraphError("tensor entries must be finite")
        array.setflags(write=False)
        self.data = array

    @property
    def shape(self):
        return self.data.shape

    def tolist(self):
        return self.data.tolist()

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)})"


@dataclass(frozen=True, eq=False)
class Node:
    """A recorded value in a :class:`Graph`.

    Nodes hash by identity, so they can key the gradient mapping returned by
    :meth:`Graph.backward`.
    """

    graph: 'Graph' = field(repr=False)
    index: int
    op: str
    parents: tuple
    value: np.ndarray = field(repr=False)
    requires_grad: bool = False
    vjp: Optional[Callable] = field(default=None, repr=False)

    @property
    def shape(self):
        return self.value.shape


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _log_softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class Graph:
    """Append-only computation graph.

    Graphs are not thread-safe while being built; a finished graph is never
    mutated by :meth:`backward`.
    """

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    @property
    def nodes(self):
        return tuple(self._nodes)

    def _record(self, op, parents, value, vjp):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise GraphError(f"{op} produced a non-finite value")
        for parent in parents:
            if parent.graph is not self:
                raise GraphError(f"{op}: operand belongs to another graph")
        requires_grad = any(parent.requires_grad for parent in parents)
        node = Node(
            graph=self,
            index=len(self._nodes),
            op=op,
            parents=tuple(parent.index for parent in parents),
            value=value,
            requires_grad=requires_grad,
            vjp=vjp if requires_grad else None,
        )
        self._nodes.append(node)
        return node

    # leaves

    def leaf(self, data, requires_grad=False):
        """Add an input tensor. Only leaves with ``requires_grad`` get gradients."""
        tensor = data if isinstance(data, Tensor) else Tensor(data)
        node = Node(
            graph=self,
            index=len(self._nodes),
            op='leaf',
            parents=(),
            value=tensor.data,
            requires_grad=requires_grad,
        )
        self._nodes.append(node)
        return node

    def constant(self, data):
        return self.leaf(data, requires_grad=False)

    # elementwise

    @staticmethod
    def _broadcast_shape(op, a, b):
        try:
            shape = np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            shape = None
        if shape is None or shape not in (a.shape, b.shape):
            raise GraphError(f"{op}: incompatible shapes {a.shape} and {b.shape}")
        return shape

    def add(self, a, b):
        self._broadcast_shape('add', a, b)
        return self._record(
            'add', (a, b), a.value + b.value,
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    def subtract(self, a, b):
        self._broadcast_shape('subtract', a, b)
        return self._record(
            'subtract', (a, b), a.value - b.value,
            lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
        )

    def multiply(self, a, b):
        self._broadcast_shape('multiply', a, b)
        return self._record(
            'multiply', (a, b), a.value * b.value,
            lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
        )

    def scale(self, a, constant):
        constant = float(constant)
        return self._record('scale', (a,), a.value * constant, lambda g: (g * constant,))

    def tanh(self, a):
        out = np.tanh(a.value)
        return self._record('tanh', (a,), out, lambda g: (g * (1.0 - out * out),))

    # matrix

    def matmul(self, a, b):
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise GraphError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        return self._record(
            'matmul', (a, b), a.value @ b.value,
            lambda g: (g @ b.value.T, a.value.T @ g),
        )

    def transpose(self, a):
        if a.value.ndim != 2:
            raise GraphError(f"transpose expects a matrix, got shape {a.shape}")
        return self._record('transpose', (a,), a.value.T.copy(), lambda g: (g.T,))

    def sum_rows(self, a):
        """Column sums of a matrix (the bias-gradient reduction)."""
        if a.value.ndim != 2:
            raise GraphError(f"sum_rows expects a matrix, got shape {a.shape}")
        return self._record(
            'sum_rows', (a,), a.value.sum(axis=0),
            lambda g: (np.broadcast_to(g, a.shape).copy(),),
        )

    def softmax_rows(self, a):
        if a.value.ndim != 2:
            raise GraphError(f"softmax_rows expects a matrix, got shape {a.shape}")
        out = np.exp(_log_softmax_rows(a.value))

        def vjp(g):
            return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

        return self._record('softmax_rows', (a,), out, vjp)

    def concat(self, parts: Sequence[Node]):
        """Ravel and join nodes into one vector."""
        if not parts:
            raise GraphError("concat needs at least one operand")
        shapes = [part.shape for part in parts]
        sizes = [part.value.size for part in parts]
        out = np.concatenate([part.value.ravel() for part in parts])

        def vjp(g):
            chunks = np.split(g, np.cumsum(sizes)[:-1])
            return tuple(chunk.reshape(shape) for chunk, shape in zip(chunks, shapes))

        return self._record('concat', tuple(parts), out, vjp)

    # scalar reductions

    def soft_cross_entropy(self, logits, targets):
        """Mean over rows of ``-sum_j t_j log softmax(z)_j``."""
        if logits.value.ndim != 2 or logits.shape != targets.shape:
            raise GraphError(
                f"soft_cross_entropy: logits {logits.shape} and targets {targets.shape} differ"
            )
        rows = logits.shape[0]
        log_p = _log_softmax_rows(logits.value)
        t = targets.value
        out = -(t * log_p).sum() / rows

        def vjp(g):
            p = np.exp(log_p)
            d_logits = (p * t.sum(axis=1, keepdims=True) - t) * (g / rows)
            d_targets = -log_p * (g / rows)
            return d_logits, d_targets

        return self._record('soft_cross_entropy', (logits, targets), out, vjp)

    def squared_l2_norm(self, a):
        return self._record(
            'squared_l2_norm', (a,), np.sum(a.value * a.value),
            lambda g: (2.0 * a.value * g,),
        )

    def mean(self, a):
        size = a.value.size
        return self._record(
            'mean', (a,), np.mean(a.value),
            lambda g: (np.full(a.shape, g / size),),
        )

    # differentiation

    def backward(self, output: Node):
        """Reverse sweep from a scalar ``output``.

        Returns a dict mapping every differentiable leaf to its gradient.
        Leaves with no path to ``output`` get an exact zero array.
        """
        if output.graph is not self:
            raise GraphError("output node belongs to another graph")
        if output.value.ndim != 0:
            raise GraphError(f"backward needs a scalar output, got shape {output.shape}")

        grads = [None] * (output.index + 1)
        grads[output.index] = np.ones_like(output.value)
        for index in range(output.index, -1, -1):
            grad = grads[index]
            node = self._nodes[index]
            if grad is None or node.vjp is None:
                continue
            for parent, parent_grad in zip(node.parents, node.vjp(grad)):
                if not self._nodes[parent].requires_grad:
                    continue
                if grads[parent] is None:
                    grads[parent] = parent_grad
                else:
                    grads[parent] = grads[parent] + parent_grad

        result = {}
        for node in self._nodes:
            if node.op != 'leaf' or not node.requires_grad:
                continue
            grad = grads[node.index] if node.index <= output.index else None
            result[node] = np.zeros_like(node.value) if grad is None else np.asarray(grad, dtype=np.float64)
        logger.debug("backward over %d nodes, %d differentiable leaves", output.index + 1, len(result))
        return result


def backward(graph: Graph, output: Node):
    """Module-level alias for :meth:`Graph.backward`."""
    return graph.backward(output)
