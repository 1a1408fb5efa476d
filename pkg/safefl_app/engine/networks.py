"""
Model families shared by the server and the clients.

Both families expose the same flat-vector interface (a ``ModelVector`` is a
1-D float64 array of length ``dim``) plus two gradient paths for the mean
soft-label cross-entropy:

* :meth:`Network.gradient` evaluates the closed form with numpy; clients use
  it for local SGD.
* :meth:`Network.graph_gradient` writes the same closed form with tensor-graph
  primitives, so :func:`unroll_inner_sgd` can chain SGD steps into one
  differentiable graph without a nested backward pass.
"""
import logging
from abc import ABC, abstractmethod

import numpy as np

from .exceptions import GraphError
from .tensor_graph import Graph, Node

logger = logging.getLogger(__name__)

# w^1 ~ N(0, 0.01): variance 0.01
INIT_STD = 0.1


def softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def one_hot(labels, n_classes):
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class Network(ABC):
    """A parametric classifier ``f`` with a flat parameter vector."""

    name = None

    def __init__(self, n_features, n_classes):
        if n_features < 1 or n_classes < 2:
            raise GraphError("a network needs at least one feature and two classes")
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)

    @property
    @abstractmethod
    def shapes(self):
        """Shapes of the parameter blocks in flattening order."""

    @property
    def dim(self):
        return int(sum(np.prod(shape) for shape in self.shapes))

    def unflatten(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise GraphError(f"{self.name}: expected a vector of length {self.dim}, got {w.shape}")
        parts, offset = [], 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            parts.append(w[offset:offset + size].reshape(shape))
            offset += size
        return parts

    def flatten(self, parts):
        return np.concatenate([np.asarray(part, dtype=np.float64).ravel() for part in parts])

    def init_params(self, rng):
        return rng.normal(0.0, INIT_STD, size=self.dim)

    @abstractmethod
    def logits(self, w, X):
        """Class scores for the rows of ``X``."""

    @abstractmethod
    def gradient(self, w, X, targets):
        """Closed-form gradient of :meth:`loss` with respect to ``w``."""

    @abstractmethod
    def graph_gradient(self, graph: Graph, params, X: Node, targets: Node):
        """Same gradient as :meth:`gradient`, built from graph primitives.

        ``params`` is the list of parameter-block nodes; the return value is
        the matching list of gradient nodes.
        """

    def loss(self, w, X, targets):
        """Mean soft-label cross-entropy; rows of ``targets`` are distributions."""
        log_p = log_softmax_rows(self.logits(w, X))
        return float(-(targets * log_p).sum() / X.shape[0])

    def predict(self, w, X):
        return np.argmax(self.logits(w, X), axis=1)

    def __repr__(self):
        return f"{type(self).__name__}(n_features={self.n_features}, n_classes={self.n_classes})"


class SoftmaxRegression(Network):
    """Multinomial logistic regression, ``z = X W + b``."""

    name = 'softmax'

    @property
    def shapes(self):
        return [(self.n_features, self.n_classes), (self.n_classes,)]

    def logits(self, w, X):
        W, b = self.unflatten(w)
        return X @ W + b

    def gradient(self, w, X, targets):
        W, b = self.unflatten(w)
        E = (softmax_rows(X @ W + b) - targets) / X.shape[0]
        return self.flatten([X.T @ E, E.sum(axis=0)])

    def graph_gradient(self, graph, params, X, targets):
        W, b = params
        rows = X.shape[0]
        P = graph.softmax_rows(graph.add(graph.matmul(X, W), b))
        E = graph.scale(graph.subtract(P, targets), 1.0 / rows)
        return [graph.matmul(graph.transpose(X), E), graph.sum_rows(E)]


class TanhMLP(Network):
    """One hidden tanh layer, ``z = tanh(X W1 + b1) W2 + b2``."""

    name = 'mlp'

    def __init__(self, n_features, n_classes, hidden=8):
        super().__init__(n_features, n_classes)
        if hidden < 1:
            raise GraphError("hidden width must be positive")
        self.hidden = int(hidden)

    @property
    def shapes(self):
        return [
            (self.n_features, self.hidden), (self.hidden,),
            (self.hidden, self.n_classes), (self.n_classes,),
        ]

    def logits(self, w, X):
        W1, b1, W2, b2 = self.unflatten(w)
        return np.tanh(X @ W1 + b1) @ W2 + b2

    def gradient(self, w, X, targets):
        W1, b1, W2, b2 = self.unflatten(w)
        H = np.tanh(X @ W1 + b1)
        E = (softmax_rows(H @ W2 + b2) - targets) / X.shape[0]
        dA = (E @ W2.T) * (1.0 - H * H)
        return self.flatten([X.T @ dA, dA.sum(axis=0), H.T @ E, E.sum(axis=0)])

    def graph_gradient(self, graph, params, X, targets):
        W1, b1, W2, b2 = params
        rows = X.shape[0]
        H = graph.tanh(graph.add(graph.matmul(X, W1), b1))
        P = graph.softmax_rows(graph.add(graph.matmul(H, W2), b2))
        E = graph.scale(graph.subtract(P, targets), 1.0 / rows)
        ones = graph.constant(np.ones(H.shape))
        dA = graph.multiply(
            graph.matmul(E, graph.transpose(W2)),
            graph.subtract(ones, graph.multiply(H, H)),
        )
        return [
            graph.matmul(graph.transpose(X), dA), graph.sum_rows(dA),
            graph.matmul(graph.transpose(H), E), graph.sum_rows(E),
        ]

    def __repr__(self):
        return (
            f"TanhMLP(n_features={self.n_features}, n_classes={self.n_classes}, "
            f"hidden={self.hidden})"
        )


SUPPORTED_NETWORKS = {
    SoftmaxRegression.name: SoftmaxRegression,
    TanhMLP.name: TanhMLP,
}


def build_network(name, n_features, n_classes, hidden=8):
    try:
        cls = SUPPORTED_NETWORKS[name]
    except KeyError:
        raise GraphError(
            f"unsupported network family {name!r}; choose from {sorted(SUPPORTED_NETWORKS)}"
        ) from None
    if cls is TanhMLP:
        return cls(n_features, n_classes, hidden=hidden)
    return cls(n_features, n_classes)


def unroll_inner_sgd(graph: Graph, network: Network, w0, X: Node, Y: Node, steps, inner_lr):
    """Record ``steps`` SGD steps on the synthetic set ``(X, softmax(Y))``.

    ``w0`` is a constant starting vector; the returned node is the flat
    parameter vector after the last step and is differentiable with respect
    to ``X`` and ``Y``.
    """
    if type(network) not in SUPPORTED_NETWORKS.values():
        raise GraphError(f"no closed-form gradient for {type(network).__name__}")
    if steps < 1:
        raise GraphError(f"unrolled SGD needs at least one step, got {steps}")

    targets = graph.softmax_rows(Y)
    params = [graph.constant(part) for part in network.unflatten(w0)]
    for _ in range(steps):
        grads = network.graph_gradient(graph, params, X, targets)
        params = [
            graph.subtract(param, graph.scale(grad, inner_lr))
            for param, grad in zip(params, grads)
        ]
    return graph.concat(params)
