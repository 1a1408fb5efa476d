"""Versioned binary snapshots of the trajectory and the synthetic dataset."""
import json
import logging

import numpy as np

from .detection import SyntheticDataset
from .exceptions import WorkbenchError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRAJECTORY_KIND = 'trajectory'
SYNTHETIC_KIND = 'dsyn'


def _write(path, kind, metadata, **arrays):
    header = dict(metadata, kind=kind, version=FORMAT_VERSION)
    # file handle, so numpy does not append ".npz" to the name
    with open(path, 'wb') as fh:
        np.savez(fh, metadata=np.array(json.dumps(header, sort_keys=True)), **arrays)
    logger.debug("wrote %s snapshot to %s", kind, path)


def _read(path, kind):
    with np.load(path, allow_pickle=False) as archive:
        metadata = json.loads(str(archive['metadata']))
        if metadata.get('kind') != kind:
            raise WorkbenchError(f"{path} holds a {metadata.get('kind')!r} snapshot, expected {kind!r}")
        if metadata.get('version') != FORMAT_VERSION:
            raise WorkbenchError(f"{path} has format version {metadata.get('version')}, expected {FORMAT_VERSION}")
        arrays = {name: archive[name] for name in archive.files if name != 'metadata'}
    return arrays, metadata


def save_trajectory(path, models, seed, network_name):
    stacked = np.stack([np.asarray(m, dtype=np.float64) for m in models])
    metadata = {'d': int(stacked.shape[1]), 'epsilon': int(len(stacked)), 'seed': seed, 'network': network_name}
    _write(path, TRAJECTORY_KIND, metadata, models=stacked)


def load_trajectory(path):
    """Return ``(models, metadata)`` with ``models`` shaped ``(epsilon, d)``."""
    arrays, metadata = _read(path, TRAJECTORY_KIND)
    return arrays['models'], metadata


def save_synthetic(path, synthetic: SyntheticDataset, seed, network_name):
    metadata = {
        'size': len(synthetic),
        'n_features': int(synthetic.features.shape[1]),
        'n_classes': int(synthetic.label_logits.shape[1]),
        'seed': seed,
        'network': network_name,
    }
    _write(path, SYNTHETIC_KIND, metadata, features=synthetic.features, label_logits=synthetic.label_logits)


def load_synthetic(path):
    arrays, metadata = _read(path, SYNTHETIC_KIND)
    return SyntheticDataset(arrays['features'], arrays['label_logits']), metadata
