"""Aggregation rules used by the server to combine local models."""
import logging

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import AggregationError

logger = logging.getLogger(__name__)


def _stack(updates):
    if len(updates) == 0:
        raise AggregationError("no updates to aggregate")
    try:
        stacked = np.stack([np.asarray(update, dtype=np.float64) for update in updates])
    except ValueError as exc:
        raise AggregationError("updates must share one dimension") from exc
    if stacked.ndim != 2:
        raise AggregationError("updates must be flat vectors")
    return stacked


def fedavg(updates):
    """Coordinate-wise arithmetic mean."""
    return _stack(updates).mean(axis=0)


def coordinate_median(updates):
    """Coordinate-wise median; even counts take the midpoint of the two central values."""
    return np.median(_stack(updates), axis=0)


def trimmed_mean(updates, k):
    """Drop the ``k`` largest and ``k`` smallest values per coordinate, average the rest."""
    stacked = _stack(updates)
    n = len(stacked)
    if k < 0 or n <= 2 * k:
        raise AggregationError(f"trimmed mean needs n > 2k, got n={n}, k={k}")
    return np.sort(stacked, axis=0)[k:n - k].mean(axis=0)


def krum_scores(updates, k):
    """Sum of squared distances from each update to its ``n - k - 2`` nearest others."""
    stacked = _stack(updates)
    n = len(stacked)
    if k < 0 or n < k + 3:
        raise AggregationError(f"krum needs n >= k + 3, got n={n}, k={k}")
    distances = cdist(stacked, stacked, 'sqeuclidean')
    neighbours = n - k - 2
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(distances[i], i)
        scores[i] = np.sort(others)[:neighbours].sum()
    return scores


def krum_select(updates, k):
    """Index of the Krum winner; ties go to the lowest index."""
    return int(np.argmin(krum_scores(updates, k)))


def krum(updates, k):
    return np.array(_stack(updates)[krum_select(updates, k)], copy=True)


def weighted_average(updates, weights):
    """``sum_i r_i * w_i`` with nonnegative weights (not renormalized)."""
    stacked = _stack(updates)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(stacked),):
        raise AggregationError("one weight per update is required")
    if np.any(weights < 0):
        raise AggregationError("weights must be nonnegative")
    return weights @ stacked


AGGREGATION_RULES = ('fedavg', 'median', 'trimmed_mean', 'krum')


def make_aggregator(name, k=0):
    """Return ``AR(updates)`` for a rule name.

    ``k`` is the assumed number of malicious updates for trimmed mean and
    Krum. It is clamped to what the given update count can support, since
    after filtering the accepted set can be small.
    """
    if name == 'fedavg':
        return fedavg
    if name == 'median':
        return coordinate_median
    if name == 'trimmed_mean':
        def aggregate(updates):
            k_eff = max(0, min(k, (len(updates) - 1) // 2))
            return trimmed_mean(updates, k_eff)
        return aggregate
    if name == 'krum':
        def aggregate(updates):
            if len(updates) < 3:
                logger.warning("krum over %d updates is undefined, using the median", len(updates))
                return coordinate_median(updates)
            return krum(updates, max(0, min(k, len(updates) - 3)))
        return aggregate
    raise AggregationError(f"unknown aggregation rule {name!r}; choose from {AGGREGATION_RULES}")
