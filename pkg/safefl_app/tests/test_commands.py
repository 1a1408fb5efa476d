import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from safefl_app.models import ExperimentRun

SMALL_CONFIG = """\
name: tiny
n_clients: 6
malicious_fraction: 0.34
rounds: 6
seed: 3
data:
  n_classes: 3
  n_features: 8
  n_per_class: 30
  test_per_class: 10
  separation: 4.0
attack:
  kind: dba
  trigger:
    feature_indices: [4, 5, 6, 7]
defense:
  detector: safefl_ml
  epsilon: 3
  delta: 1
  iterations: 5
  syn_size: 4
"""


class CommandTestMixin:

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.config = self.root / 'tiny.yaml'
        self.config.write_text(SMALL_CONFIG)

    def call(self, name, **options):
        out, err = StringIO(), StringIO()
        call_command(name, stdout=out, stderr=err, **options)
        return out.getvalue(), err.getvalue()


class RunCommandTests(CommandTestMixin, TestCase):

    def test_same_seed_gives_byte_identical_rounds(self):
        self.call('run', config=str(self.config), out=str(self.root / 'a'), seed=42)
        self.call('run', config=str(self.config), out=str(self.root / 'b'), seed=42)
        first = (self.root / 'a' / 'rounds.csv').read_bytes()
        self.assertEqual(first, (self.root / 'b' / 'rounds.csv').read_bytes())
        self.assertEqual(
            (self.root / 'a' / 'summary.csv').read_bytes(), (self.root / 'b' / 'summary.csv').read_bytes()
        )

    def test_outputs_and_summary(self):
        out, _ = self.call('run', config=str(self.config), out=str(self.root / 'run'))
        for name in ('rounds.csv', 'summary.csv', 'syngen_log.csv', 'trajectory.bin', 'dsyn.bin'):
            self.assertTrue((self.root / 'run' / name).exists(), name)
        self.assertIn('tiny: 6 rounds', out)
        self.assertIn('final_tacc:', out)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_record_stores_the_run(self):
        self.call('run', config=str(self.config), out=str(self.root / 'run'), record=True)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'completed')
        self.assertEqual(run.attack, 'dba')
        self.assertEqual(run.rounds.count(), 6)
        self.assertEqual(len(run.get_malicious_list()), 2)

    def test_invalid_config_exits_with_two(self):
        bad = self.root / 'bad.yaml'
        bad.write_text('rounds: 5\ndefense:\n  epsilon: 9\n  delta: 2\n')
        with self.assertRaises(CommandError) as ctx:
            self.call('run', config=str(bad), out=str(self.root / 'bad'))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse((self.root / 'bad').exists())

    def test_missing_config_exits_with_two(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('run', config=str(self.root / 'missing.yaml'))
        self.assertEqual(ctx.exception.returncode, 2)


class ExportBlobsCommandTests(CommandTestMixin, TestCase):

    def test_writes_train_test_and_clients(self):
        target = self.root / 'blobs'
        out, _ = self.call('export_blobs', config=str(self.config), out=str(target))
        self.assertEqual(len((target / 'train.csv').read_text().splitlines()), 1 + 90)
        self.assertEqual(len((target / 'test.csv').read_text().splitlines()), 1 + 30)
        clients = sorted(p.name for p in target.glob('client_*.csv'))
        self.assertEqual(clients, [f'client_{i:03d}.csv' for i in range(6)])
        rows = sum(len((target / name).read_text().splitlines()) - 1 for name in clients)
        self.assertEqual(rows, 90)
        self.assertIn('6 client files', out)
