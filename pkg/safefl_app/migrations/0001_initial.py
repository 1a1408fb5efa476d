# Generated by Django 5.1.6 on 2026-10-19 09:12

import django.core.validators
import django.db.models.deletion
from django.db import migrations, models


def unit_interval():
    return models.FloatField(
        blank=True, null=True,
        validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)],
    )


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255)),
                ('seed', models.IntegerField(default=0)),
                ('config', models.TextField()),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('attack', models.CharField(blank=True, max_length=50)),
                ('detector', models.CharField(blank=True, max_length=50)),
                ('aggregator', models.CharField(blank=True, max_length=50)),
                ('dacc', unit_interval()),
                ('fpr', unit_interval()),
                ('fnr', unit_interval()),
                ('f1', unit_interval()),
                ('final_tacc', unit_interval()),
                ('final_asr', unit_interval()),
                ('summary', models.TextField(blank=True, null=True)),
                ('malicious_clients', models.TextField(blank=True, null=True)),
                ('duration', models.FloatField(blank=True, help_text='Wall time in seconds', null=True)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [
                    models.Index(fields=['attack'], name='run_attack_idx'),
                    models.Index(fields=['detector'], name='run_detector_idx'),
                    models.Index(fields=['status'], name='run_status_idx'),
                    models.Index(fields=['created_at'], name='run_created_idx'),
                ],
            },
        ),
        migrations.CreateModel(
            name='RoundRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('round_index', models.PositiveIntegerField()),
                ('phase', models.CharField(choices=[('trajectory', 'Trajectory collection'), ('detection', 'Detection'), ('none', 'Undefended')], max_length=20)),
                ('participants', models.PositiveIntegerField(default=0)),
                ('flagged', models.PositiveIntegerField(default=0)),
                ('dacc', unit_interval()),
                ('fpr', unit_interval()),
                ('fnr', unit_interval()),
                ('precision', unit_interval()),
                ('recall', unit_interval()),
                ('f1', unit_interval()),
                ('tacc', unit_interval()),
                ('asr', unit_interval()),
                ('verdicts', models.TextField(blank=True, null=True)),
                ('losses', models.TextField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='rounds', to='safefl_app.experimentrun')),
            ],
            options={
                'ordering': ['run', 'round_index'],
                'unique_together': {('run', 'round_index')},
            },
        ),
    ]
