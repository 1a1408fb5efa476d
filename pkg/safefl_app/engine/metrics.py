"""Detection and model-quality metrics reported per round."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, TriggerSpec
from .networks import Network

logger = logging.getLogger(__name__)


def _ratio(numerator, denominator):
    return None if denominator == 0 else numerator / denominator


@dataclass(frozen=True)
class DetectionMetrics:
    """Confusion-matrix metrics with "malicious" as the positive class.

    Rates whose denominator is zero are ``None``.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    dacc: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


def detection_metrics(flagged, ground_truth):
    flagged = np.asarray(flagged, dtype=bool)
    ground_truth = np.asarray(ground_truth, dtype=bool)
    if flagged.shape != ground_truth.shape:
        raise ValueError("verdicts and ground truth must have the same length")
    tp = int(np.sum(flagged & ground_truth))
    fp = int(np.sum(flagged & ~ground_truth))
    tn = int(np.sum(~flagged & ~ground_truth))
    fn = int(np.sum(~flagged & ground_truth))
    return DetectionMetrics(
        tp=tp, fp=fp, tn=tn, fn=fn,
        dacc=_ratio(tp + tn, tp + fp + tn + fn),
        fpr=_ratio(fp, fp + tn),
        fnr=_ratio(fn, fn + tp),
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
    )


def tacc(model, network: Network, test_set: Dataset):
    """Fraction of test samples whose argmax prediction is correct."""
    if len(test_set) == 0:
        raise ValueError("TACC needs a non-empty test set")
    return float(np.mean(network.predict(model, test_set.features) == test_set.labels))


def asr(model, network: Network, test_set: Dataset, trigger: TriggerSpec, segment_index=None):
    """Fraction of stamped non-target test samples classified as the target label.

    ``segment_index`` stamps one trigger segment only. Returns ``None`` when
    every test sample already carries the target label.
    """
    eligible = test_set.labels != trigger.target_label
    if not eligible.any():
        logger.warning("ASR undefined: every test sample already has the target label")
        return None
    stamped = trigger.stamp(test_set.features[eligible], segment_index)
    return float(np.mean(network.predict(model, stamped) == trigger.target_label))


def segment_asr(model, network: Network, test_set: Dataset, trigger: TriggerSpec):
    """ASR with the full trigger followed by the ASR of each segment alone."""
    full = asr(model, network, test_set, trigger)
    return full, [asr(model, network, test_set, trigger, s) for s in range(trigger.n_segments)]


def mean_defined(values):
    """Arithmetic mean over the non-``None`` entries, ``None`` if there are none."""
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None
