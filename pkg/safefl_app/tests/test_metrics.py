import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from safefl_app.engine.data import Dataset, TriggerSpec
from safefl_app.engine.detection import SyntheticDataset
from safefl_app.engine.exceptions import WorkbenchError
from safefl_app.engine.metrics import asr, detection_metrics, mean_defined, segment_asr, tacc
from safefl_app.engine.networks import SoftmaxRegression
from safefl_app.engine.persistence import (
    load_synthetic, load_trajectory, save_synthetic, save_trajectory
)


class DetectionMetricTests(SimpleTestCase):

    def test_worked_example(self):
        m = detection_metrics([True, True, False, False, False], [True, False, True, False, False])
        self.assertEqual((m.tp, m.fp, m.tn, m.fn), (1, 1, 2, 1))
        self.assertAlmostEqual(m.dacc, 0.6)
        self.assertAlmostEqual(m.fpr, 1 / 3)
        self.assertAlmostEqual(m.fnr, 0.5)
        self.assertAlmostEqual(m.precision, 0.5)
        self.assertAlmostEqual(m.recall, 0.5)
        self.assertAlmostEqual(m.f1, 0.5)

    def test_undefined_rates_are_none(self):
        m = detection_metrics([False, False], [False, False])
        self.assertEqual(m.dacc, 1.0)
        self.assertEqual(m.fpr, 0.0)
        self.assertIsNone(m.fnr)
        self.assertIsNone(m.precision)
        self.assertIsNone(m.recall)
        self.assertIsNone(m.f1)

    def test_against_counting_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            flagged = rng.random(n) < 0.4
            truth = rng.random(n) < 0.3
            m = detection_metrics(flagged, truth)
            pairs = list(zip(flagged.tolist(), truth.tolist()))
            self.assertEqual(m.tp, pairs.count((True, True)))
            self.assertEqual(m.fp, pairs.count((True, False)))
            self.assertEqual(m.tn, pairs.count((False, False)))
            self.assertEqual(m.fn, pairs.count((False, True)))
            self.assertAlmostEqual(m.dacc, float(np.mean(flagged == truth)))
            self.assertEqual(m.tp + m.fp + m.tn + m.fn, n)

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            detection_metrics([True], [True, False])

    def test_mean_defined(self):
        self.assertEqual(mean_defined([1.0, None, 3.0]), 2.0)
        self.assertIsNone(mean_defined([None, None]))


class ModelMetricTests(SimpleTestCase):

    def setUp(self):
        self.network = SoftmaxRegression(3, 2)
        # class 1 iff feature 0 is positive; feature 2 is the trigger slot
        W = np.array([[-5.0, 5.0], [0.0, 0.0], [-8.0, 8.0]])
        self.model = self.network.flatten([W, np.zeros(2)])
        self.test_set = Dataset(
            np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [-2.0, 0.0, 0.0]]),
            [1, 1, 0, 1],
            n_classes=2,
        )

    def test_tacc(self):
        self.assertEqual(tacc(self.model, self.network, self.test_set), 0.75)

    def test_asr_counts_only_non_target_samples(self):
        trigger = TriggerSpec(feature_indices=(2,), trigger_value=-1.0, target_label=0, n_segments=1)
        # three samples labelled 1; the stamp pushes all but x0=2 to class 0
        self.assertAlmostEqual(asr(self.model, self.network, self.test_set, trigger), 2 / 3)

    def test_asr_undefined_when_everything_is_target(self):
        trigger = TriggerSpec(feature_indices=(2,), target_label=0, n_segments=1)
        only_target = Dataset(np.zeros((2, 3)), [0, 0], n_classes=2)
        with self.assertLogs('safefl_app.engine.metrics', level='WARNING'):
            self.assertIsNone(asr(self.model, self.network, only_target, trigger))

    def test_segment_asr(self):
        trigger = TriggerSpec(feature_indices=(1, 2), trigger_value=-1.0, target_label=0, n_segments=2)
        full, per_segment = segment_asr(self.model, self.network, self.test_set, trigger)
        self.assertAlmostEqual(full, 2 / 3)
        # feature 1 carries no weight, so only the sample already misclassified counts
        self.assertAlmostEqual(per_segment[0], 1 / 3)
        self.assertAlmostEqual(per_segment[1], 2 / 3)

    def test_full_trigger_is_stronger_than_any_segment(self):
        network = SoftmaxRegression(5, 2)
        # feature 0 votes for class 1; each trigger slot votes for class 0
        W = np.array([[-2.0, 2.0], [1.0, -1.0], [1.0, -1.0], [1.0, -1.0], [1.0, -1.0]])
        model = network.flatten([W, np.zeros(2)])
        test_set = Dataset(
            np.array([[0.5, 0, 0, 0, 0], [1.0, 0, 0, 0, 0], [2.0, 0, 0, 0, 0], [-1.0, 0, 0, 0, 0]]),
            [1, 1, 1, 0],
            n_classes=2,
        )
        trigger = TriggerSpec(feature_indices=(1, 2, 3, 4), trigger_value=1.5, target_label=0, n_segments=4)
        full, per_segment = segment_asr(model, network, test_set, trigger)
        self.assertEqual(full, 1.0)
        assert_allclose(per_segment, [1 / 3] * 4)
        self.assertTrue(all(full > value for value in per_segment))


class PersistenceTests(SimpleTestCase):

    def test_trajectory_snapshot(self):
        models = [np.arange(4, dtype=float) * i for i in range(3)]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'trajectory.bin'
            save_trajectory(path, models, seed=7, network_name='softmax')
            self.assertTrue(path.exists())
            loaded, metadata = load_trajectory(path)
        assert_array_equal(loaded, np.stack(models))
        self.assertEqual(metadata['epsilon'], 3)
        self.assertEqual(metadata['d'], 4)
        self.assertEqual(metadata['seed'], 7)

    def test_synthetic_snapshot_and_kind_check(self):
        synthetic = SyntheticDataset(np.ones((2, 3)), np.zeros((2, 4)))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'dsyn.bin'
            save_synthetic(path, synthetic, seed=1, network_name='mlp')
            loaded, metadata = load_synthetic(path)
            with self.assertRaises(WorkbenchError):
                load_trajectory(path)
        assert_array_equal(loaded.features, synthetic.features)
        self.assertEqual(metadata['n_classes'], 4)
        self.assertEqual(metadata['network'], 'mlp')
