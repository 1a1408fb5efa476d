"""
Desk-scale datasets, client partitioning and data-level manipulations.
"""
import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DataError

logger = logging.getLogger(__name__)

PROBABILISTIC_Q = 'probabilistic_q'
LABEL_RESTRICTED = 'label_restricted'


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled feature matrix; labels are class ids in ``[0, n_classes)``."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1 or len(features) != len(labels):
            raise DataError("features must be N x F and labels length N")
        if len(labels) < 1:
            raise DataError("a dataset needs at least one sample")
        if not np.all(np.isfinite(features)):
            raise DataError("feature values must be finite")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.n_classes)

    def to_csv(self, path):
        """Write the columnar form ``f0..f{F-1},label``."""
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow([f'f{j}' for j in range(self.n_features)] + ['label'])
            for row, label in zip(self.features, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])

    @classmethod
    def from_csv(cls, path, n_classes):
        with open(path, newline='') as handle:
            reader = csv.reader(handle)
            next(reader)
            rows = [line for line in reader if line]
        features = np.array([[float(v) for v in line[:-1]] for line in rows])
        labels = np.array([int(line[-1]) for line in rows])
        return cls(features, labels, n_classes)


@dataclass(frozen=True)
class PartitionSpec:
    scheme: str = PROBABILISTIC_Q
    q: float = 0.5
    classes_per_client: int = 3
    n_clients: int = 10
    seed: int = 0

    def validate(self, n_classes):
        if self.n_clients < 1:
            raise DataError("n_clients must be positive")
        if self.scheme == PROBABILISTIC_Q:
            if not (1.0 / n_classes - 1e-12 <= self.q <= 1.0):
                raise DataError(f"q must lie in [1/{n_classes}, 1], got {self.q}")
            if self.n_clients < n_classes:
                raise DataError("the probabilistic scheme needs at least one client per class group")
        elif self.scheme == LABEL_RESTRICTED:
            if not (1 <= self.classes_per_client <= n_classes):
                raise DataError(f"classes_per_client must lie in [1, {n_classes}]")
        else:
            raise DataError(f"unknown partition scheme {self.scheme!r}")


@dataclass(frozen=True)
class TriggerSpec:
    """Backdoor trigger: fixed values stamped on a set of feature indices."""

    feature_indices: tuple
    trigger_value: float = 6.0
    target_label: int = 0
    n_segments: int = 4

    def __post_init__(self):
        indices = tuple(int(i) for i in self.feature_indices)
        if not indices:
            raise DataError("a trigger needs at least one feature index")
        if len(set(indices)) != len(indices):
            raise DataError("trigger feature indices must be distinct")
        if not (1 <= self.n_segments <= len(indices)):
            raise DataError("n_segments must lie in [1, number of trigger indices]")
        object.__setattr__(self, 'feature_indices', indices)

    def segments(self):
        """Disjoint index groups used by the distributed backdoor."""
        return [tuple(int(i) for i in part) for part in np.array_split(self.feature_indices, self.n_segments)]

    def indices_for(self, segment_index=None):
        if segment_index is None:
            return self.feature_indices
        if not (0 <= segment_index < self.n_segments):
            raise DataError(f"segment {segment_index} out of range for {self.n_segments} segments")
        return self.segments()[segment_index]

    def stamp(self, features, segment_index=None):
        """Return a copy of ``features`` with the trigger written in."""
        indices = list(self.indices_for(segment_index))
        if max(indices) >= features.shape[1]:
            raise DataError("trigger index beyond the feature dimension")
        stamped = np.array(features, dtype=np.float64, copy=True)
        stamped[:, indices] = self.trigger_value
        return stamped


@dataclass(frozen=True, eq=False)
class Blobs:
    """Output of :func:`gen_blobs`: the dataset plus its class centers."""

    dataset: Dataset
    centers: np.ndarray = field(repr=False)


def gen_blobs(n_per_class, n_classes, n_features, separation, seed):
    """Gaussian blobs with unit noise around class centers.

    Center ``c`` sits at ``separation / sqrt(2) * e_c`` so every pair of
    centers is exactly ``separation`` apart.
    """
    if n_classes < 2 or n_features < n_classes:
        raise DataError("gen_blobs needs n_classes >= 2 and n_features >= n_classes")
    if n_per_class < 1:
        raise DataError("n_per_class must be positive")
    rng = np.random.default_rng(seed)
    centers = np.zeros((n_classes, n_features))
    centers[np.arange(n_classes), np.arange(n_classes)] = separation / np.sqrt(2.0)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    features = centers[labels] + rng.normal(size=(len(labels), n_features))
    order = rng.permutation(len(labels))
    return Blobs(Dataset(features[order], labels[order], n_classes), centers)


def assign_groups(labels, n_groups, q, rng):
    """Group id per sample: own label w.p. ``q``, any other group w.p. ``(1-q)/(M-1)``."""
    labels = np.asarray(labels)
    stay = rng.random(len(labels)) < q
    # uniform over the other M-1 groups
    shift = rng.integers(1, n_groups, size=len(labels))
    return np.where(stay, labels, (labels + shift) % n_groups)


def _split_evenly(indices, n_parts, rng):
    shuffled = rng.permutation(indices)
    return np.array_split(shuffled, n_parts)


def client_classes(client_id, classes_per_client, n_classes):
    """Label set of a client under the label-restricted scheme."""
    start = classes_per_client * client_id
    return sorted({(start + k) % n_classes for k in range(classes_per_client)})


def partition(dataset: Dataset, spec: PartitionSpec):
    """Split ``dataset`` into ``spec.n_clients`` disjoint client datasets."""
    spec.validate(dataset.n_classes)
    rng = np.random.default_rng(spec.seed)
    M = dataset.n_classes
    buckets = [[] for _ in range(spec.n_clients)]

    if spec.scheme == PROBABILISTIC_Q:
        groups = assign_groups(dataset.labels, M, spec.q, rng)
        clients_by_group = np.array_split(np.arange(spec.n_clients), M)
        for group, members in enumerate(clients_by_group):
            samples = np.flatnonzero(groups == group)
            for client, chunk in zip(members, _split_evenly(samples, len(members), rng)):
                buckets[client].extend(chunk.tolist())
    else:
        owners = {label: [] for label in range(M)}
        for client in range(spec.n_clients):
            for label in client_classes(client, spec.classes_per_client, M):
                owners[label].append(client)
        for label in range(M):
            samples = np.flatnonzero(dataset.labels == label)
            if len(samples) and not owners[label]:
                raise DataError(f"class {label} is held by no client; add clients or classes per client")
            for client, chunk in zip(owners[label], _split_evenly(samples, max(len(owners[label]), 1), rng)):
                buckets[client].extend(chunk.tolist())

    empty = [client for client, bucket in enumerate(buckets) if not bucket]
    if empty:
        raise DataError(f"clients {empty} received no samples; enlarge the dataset or reduce n_clients")
    parts = [dataset.subset(sorted(bucket)) for bucket in buckets]
    logger.debug("partitioned %d samples into sizes %s", len(dataset), [len(p) for p in parts])
    return parts


def apply_trigger(dataset: Dataset, trigger: TriggerSpec, fraction, segment_index: Optional[int] = None, seed=0):
    """Append trigger-stamped, relabeled copies of a random ``fraction`` of rows."""
    if not (0.0 < fraction <= 1.0):
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    trigger.indices_for(segment_index)
    rng = np.random.default_rng(seed)
    count = max(1, int(round(fraction * len(dataset))))
    chosen = np.sort(rng.choice(len(dataset), size=count, replace=False))
    poisoned = trigger.stamp(dataset.features[chosen], segment_index)
    return Dataset(
        np.vstack([dataset.features, poisoned]),
        np.concatenate([dataset.labels, np.full(count, trigger.target_label)]),
        dataset.n_classes,
    )


def default_flip(n_classes):
    return list(range(n_classes - 1, -1, -1))


def flip_labels(dataset: Dataset, permutation: Optional[Sequence[int]] = None):
    """Map labels through a bijection on ``[0, M)``; default ``l -> M-1-l``."""
    M = dataset.n_classes
    permutation = default_flip(M) if permutation is None else list(permutation)
    if sorted(permutation) != list(range(M)):
        raise DataError(f"{permutation} is not a permutation of 0..{M - 1}")
    mapping = np.asarray(permutation, dtype=np.int64)
    return Dataset(dataset.features, mapping[dataset.labels], M)
