"""
Malicious-client detection from a server-side synthetic dataset.

The server distills the early global-model trajectory into a small synthetic
set (:func:`syngen`), scores every received local model by its loss on that
set (:func:`eval_losses`) and flags clients either against the median loss
(:func:`safefl_ml`) or by clustering the losses (:func:`safefl_cl`).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .aggregation import fedavg, weighted_average
from .clustering import kmeans, meanshift
from .exceptions import DetectionError, GraphError
from .networks import Network, softmax_rows, unroll_inner_sgd
from .tensor_graph import Graph

logger = logging.getLogger(__name__)

LOSS_FLOOR = 1e-12
Y_JITTER_STD = 0.1


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Learnable features ``X`` (S x F) and soft-label logits ``Y`` (S x M)."""

    features: np.ndarray
    label_logits: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        Y = np.array(self.label_logits, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y) or len(X) < 1:
            raise DetectionError("synthetic features and labels need matching row counts")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DetectionError("synthetic data must be finite")
        object.__setattr__(self, 'features', X)
        object.__setattr__(self, 'label_logits', Y)

    def __len__(self):
        return len(self.features)

    @property
    def targets(self):
        """Row-softmaxed labels, the distributions used as training targets."""
        return softmax_rows(self.label_logits)


@dataclass(frozen=True)
class SynGenConfig:
    iterations: int = 500
    lr: float = 0.1
    steps: int = 15
    inner_lr: float = 0.5
    size: int = 20
    seed: int = 0


@dataclass
class SynGenResult:
    dataset: SyntheticDataset
    objectives: list = field(default_factory=list)
    alphas: list = field(default_factory=list)


def init_synthetic(network: Network, size, rng):
    """``X ~ N(0, 1)``; ``Y`` one-hot over classes cycled through the rows plus small jitter."""
    X = rng.normal(size=(size, network.n_features))
    Y = np.zeros((size, network.n_classes))
    Y[np.arange(size), np.arange(size) % network.n_classes] = 1.0
    Y += rng.normal(0.0, Y_JITTER_STD, size=Y.shape)
    return SyntheticDataset(X, Y)


def matching_objective(network: Network, w_start, w_target, X, Y, steps, inner_lr):
    """``||f(X, Y, w_start, steps) - w_target||^2`` and its gradients in ``X`` and ``Y``."""
    graph = Graph()
    X_node = graph.leaf(X, requires_grad=True)
    Y_node = graph.leaf(Y, requires_grad=True)
    w_hat = unroll_inner_sgd(graph, network, w_start, X_node, Y_node, steps, inner_lr)
    target = graph.constant(w_target)
    objective = graph.squared_l2_norm(graph.subtract(w_hat, target))
    grads = graph.backward(objective)
    return float(objective.value), grads[X_node], grads[Y_node]


def syngen(trajectory, network: Network, config: SynGenConfig, initial: Optional[SyntheticDataset] = None):
    """Optimize a synthetic dataset so ``steps`` SGD steps on it reproduce trajectory hops.

    Each iteration samples a start index uniformly, unrolls the inner SGD
    from that model and takes one gradient step on ``X`` and ``Y`` toward the
    model ``steps`` positions later. The trajectory is only read.
    """
    models = [np.asarray(model, dtype=np.float64) for model in trajectory]
    epsilon, delta = len(models), config.steps
    if delta < 1:
        raise DetectionError(f"SynGen needs at least one inner step, got {delta}")
    if epsilon <= delta:
        raise DetectionError(f"trajectory of length {epsilon} is too short for {delta} inner steps")
    if config.iterations < 0:
        raise DetectionError("SynGen iteration count must be nonnegative")

    rng = np.random.default_rng(config.seed)
    current = initial if initial is not None else init_synthetic(network, config.size, rng)
    X = current.features.copy()
    Y = current.label_logits.copy()
    result = SynGenResult(dataset=current)

    for iteration in range(config.iterations):
        alpha = int(rng.integers(1, epsilon - delta + 1))
        try:
            value, grad_X, grad_Y = matching_objective(
                network, models[alpha - 1], models[alpha - 1 + delta], X, Y, delta, config.inner_lr,
            )
        except GraphError as exc:
            raise DetectionError(f"SynGen diverged at iteration {iteration}: {exc}") from exc
        X = X - config.lr * grad_X
        Y = Y - config.lr * grad_Y
        result.objectives.append(value)
        result.alphas.append(alpha)
        if iteration % 100 == 0:
            logger.debug("syngen iteration %d alpha=%d objective=%.6g", iteration, alpha, value)

    if config.iterations:
        result.dataset = SyntheticDataset(X, Y)
        logger.info(
            "syngen finished %d iterations, objective %.6g -> %.6g",
            config.iterations, result.objectives[0], result.objectives[-1],
        )
    return result


def eval_losses(updates, network: Network, synthetic: SyntheticDataset):
    """Mean soft-label cross-entropy of every local model on the synthetic set."""
    targets = synthetic.targets
    return np.array([network.loss(update, synthetic.features, targets) for update in updates])


@dataclass(eq=False)
class DetectionVerdict:
    """Per-client flags (``True`` = malicious), losses, ML weights and the new global model.

    ``aggregate`` is ``None`` when nothing was accepted.
    """

    malicious: np.ndarray
    losses: np.ndarray
    aggregate: Optional[np.ndarray]
    weights: Optional[np.ndarray] = None

    @property
    def accepted(self):
        return np.flatnonzero(~self.malicious)


def median_loss_weights(losses, normalize_over_all=False):
    """Flags and weights of the median-loss rule.

    A client is benign iff its loss is at most the median (midpoint rule for
    even counts). Benign weights are inverse losses; by default they are
    renormalized over the benign set, with ``normalize_over_all`` they are divided
    by the sum of inverse losses over all clients.
    """
    losses = np.maximum(np.asarray(losses, dtype=np.float64), LOSS_FLOOR)
    median = float(np.median(losses))
    benign = losses <= median
    inverse = 1.0 / losses
    denominator = inverse.sum() if normalize_over_all else inverse[benign].sum()
    weights = np.where(benign, inverse / denominator, 0.0)
    return ~benign, weights, median


def safefl_ml(updates, losses, normalize_over_all=False):
    if len(updates) != len(losses):
        raise DetectionError("one loss per update is required")
    malicious, weights, median = median_loss_weights(losses, normalize_over_all)
    logger.debug("median loss %.6g, %d flagged", median, int(malicious.sum()))
    return DetectionVerdict(
        malicious=malicious,
        losses=np.asarray(losses, dtype=np.float64),
        aggregate=weighted_average(updates, weights),
        weights=weights,
    )


def safefl_cl(updates, losses, aggregator: Callable = fedavg, cluster: Callable = meanshift):
    """Accept the largest loss cluster and aggregate it with ``aggregator``."""
    if len(updates) != len(losses):
        raise DetectionError("one loss per update is required")
    losses = np.asarray(losses, dtype=np.float64)
    accepted = cluster(losses).mask()
    aggregate = None
    if accepted.any():
        aggregate = aggregator([updates[i] for i in np.flatnonzero(accepted)])
    else:
        logger.warning("loss clustering accepted no client; keeping the previous global model")
    return DetectionVerdict(malicious=~accepted, losses=losses, aggregate=aggregate)


def filter_models(updates, aggregator: Callable = fedavg, cluster: Optional[Callable] = None):
    """Trajectory-phase filter: aggregate the largest cluster of raw local models."""
    cluster = cluster or (lambda values: kmeans(values, min(2, len(values))))
    accepted = cluster(np.stack(updates)).mask()
    aggregate = None
    if accepted.any():
        aggregate = aggregator([updates[i] for i in np.flatnonzero(accepted)])
    return accepted, aggregate


class SafeFLDefense:
    """Server-side detector holding the synthetic set once it exists.

    ``mode`` is ``'ml'`` (median loss) or ``'cl'`` (loss clustering).
    """

    def __init__(self, mode, network: Network, aggregator: Callable, trajectory_cluster: Callable,
                 loss_cluster: Callable, normalize_over_all=False):
        if mode not in ('ml', 'cl'):
            raise DetectionError(f"unknown SafeFL mode {mode!r}")
        self.mode = mode
        self.network = network
        self.aggregator = aggregator
        self.trajectory_cluster = trajectory_cluster
        self.loss_cluster = loss_cluster
        self.normalize_over_all = normalize_over_all
        self.synthetic = None

    @property
    def name(self):
        return f'safefl_{self.mode}'

    def filter(self, updates):
        return filter_models(updates, self.aggregator, self.trajectory_cluster)

    def detect(self, updates):
        if self.synthetic is None:
            raise DetectionError("detection requested before the synthetic dataset was generated")
        losses = eval_losses(updates, self.network, self.synthetic)
        if self.mode == 'ml':
            return safefl_ml(updates, losses, normalize_over_all=self.normalize_over_all)
        return safefl_cl(updates, losses, self.aggregator, self.loss_cluster)

    def accepts(self, updates, detection_phase):
        """Boolean acceptance mask the defense would produce for ``updates``."""
        if detection_phase:
            return ~self.detect(updates).malicious
        accepted, _ = self.filter(updates)
        return accepted
