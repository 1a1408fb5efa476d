from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from safefl_app.config import config_to_dict, load_config
from safefl_app.engine.exceptions import ConfigError, WorkbenchError
from safefl_app.engine.experiment import run_experiment
from safefl_app.models import ExperimentRun


class Command(BaseCommand):
    help = "Run one federated experiment from a YAML configuration and write its CSV and snapshot files."

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Path to the experiment YAML file")
        parser.add_argument('--out', help="Output directory (default: SAFEFL OUTPUT_DIR/<name>-<seed>)")
        parser.add_argument('--seed', type=int, help="Override the master seed")
        parser.add_argument('--record', action='store_true', help="Also store the run in the database")

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'], seed=options['seed'])
        except ConfigError as e:
            for message in e.errors:
                self.stderr.write(message)
            raise CommandError(f"invalid configuration {options['config']}", returncode=2) from e

        out = Path(options['out']) if options['out'] else settings.SAFEFL['OUTPUT_DIR'] / f'{config.name}-{config.seed}'
        run = None
        if options['record']:
            run = ExperimentRun(
                name=config.name, seed=config.seed, attack=config.attack.kind,
                detector=config.defense.detector, aggregator=config.defense.aggregator,
            )
            run.set_config_dict(config_to_dict(config))
            run.save()

        try:
            result = run_experiment(config, out_dir=out)
        except WorkbenchError as e:
            if run is not None:
                run.mark_failed(str(e))
            raise CommandError(f"experiment failed: {e}", returncode=1) from e

        if run is not None:
            run.store_result(result)

        summary = result.summary
        self.stdout.write(self.style.SUCCESS(
            f"{config.name}: {config.rounds} rounds in {result.duration:.1f}s, output in {out}"
        ))
        for key in ('dacc', 'fpr', 'fnr', 'final_tacc', 'final_asr'):
            value = summary.get(key)
            self.stdout.write(f"  {key}: {'NA' if value is None else f'{value:.4f}'}")
