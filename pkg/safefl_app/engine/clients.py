"""Client-side work: local SGD and optional Gaussian noise on the submitted model."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import DataError
from .networks import Network, one_hot

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClientState:
    """A participant. ``is_malicious`` is ground truth the server never reads."""

    id: int
    dataset: Dataset
    is_malicious: bool = False
    rng_seed: int = 0


def sgd_steps(global_model, dataset: Dataset, network: Network, lr, local_steps=1, batch_size=None, seed=0):
    """Run ``local_steps`` mini-batch SGD steps from the broadcast model.

    ``batch_size`` of ``None``/0, or larger than the dataset, means full batch.
    Batches are drawn from ``default_rng(seed)``, so the result is a pure
    function of its arguments.
    """
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    w = np.array(global_model, dtype=np.float64, copy=True)
    if local_steps <= 0:
        return w
    n = len(dataset)
    full = not batch_size or batch_size >= n
    targets = one_hot(dataset.labels, dataset.n_classes)
    rng = None if full else np.random.default_rng(seed)
    for _ in range(local_steps):
        if full:
            X, T = dataset.features, targets
        else:
            batch = rng.choice(n, size=batch_size, replace=False)
            X, T = dataset.features[batch], targets[batch]
        w -= lr * network.gradient(w, X, T)
    return w


def client_seed(client: ClientState, round_index):
    """Per-client, per-round seed material for ``numpy.random.default_rng``."""
    return [client.rng_seed, round_index]


def local_train(global_model, client: ClientState, network, lr, local_steps=1, batch_size=None, round_index=0):
    """Local model of ``client`` for round ``round_index``; deterministic in its seed and the round."""
    return sgd_steps(
        global_model, client.dataset, network, lr,
        local_steps=local_steps, batch_size=batch_size,
        seed=client_seed(client, round_index),
    )


def train_clients(global_model, clients, network, lr, round_index, local_steps=1, batch_size=None, workers=1):
    """Train every client in ``clients``; results come back in input order."""
    def work(client):
        return local_train(global_model, client, network, lr, local_steps, batch_size, round_index)

    if workers and workers > 1 and len(clients) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, clients))
    return [work(client) for client in clients]


def add_dp_noise(update, noise_level, seed):
    """Add i.i.d. ``N(0, noise_level^2)`` to every coordinate."""
    if noise_level < 0:
        raise DataError("noise level must be nonnegative")
    update = np.asarray(update, dtype=np.float64)
    if noise_level == 0:
        return update.copy()
    rng = np.random.default_rng(seed)
    return update + rng.normal(0.0, noise_level, size=update.shape)
