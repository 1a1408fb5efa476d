from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from safefl_app.config import load_config
from safefl_app.engine.exceptions import ConfigError
from safefl_app.engine.experiment import build_clients, build_datasets


class Command(BaseCommand):
    help = "Write the train and test blobs of a configuration, plus every client partition, as CSV."

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True)
        parser.add_argument('--out', required=True)
        parser.add_argument('--seed', type=int)

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'], seed=options['seed'])
        except ConfigError as e:
            for message in e.errors:
                self.stderr.write(message)
            raise CommandError(f"invalid configuration {options['config']}", returncode=2) from e

        train, test = build_datasets(config)
        clients, _ = build_clients(config, train)

        out = Path(options['out'])
        out.mkdir(parents=True, exist_ok=True)
        train.to_csv(out / 'train.csv')
        test.to_csv(out / 'test.csv')
        for client in clients:
            client.dataset.to_csv(out / f'client_{client.id:03d}.csv')
        self.stdout.write(self.style.SUCCESS(
            f"wrote {len(train)} train / {len(test)} test samples and {len(clients)} client files to {out}"
        ))
