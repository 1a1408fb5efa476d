from django.db import models
from django.core.validators import MinValueValidator, MaxValueValidator
import json


def _unit_interval(**kwargs):
    return models.FloatField(
        null=True, blank=True,
        validators=[MinValueValidator(0.0), MaxValueValidator(1.0)],
        **kwargs
    )


class ExperimentRun(models.Model):
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    name = models.CharField(max_length=255)
    seed = models.IntegerField(default=0)
    config = models.TextField()  # JSON string of the validated configuration
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')

    # Headline settings, copied out of the config for filtering
    attack = models.CharField(max_length=50, blank=True)
    detector = models.CharField(max_length=50, blank=True)
    aggregator = models.CharField(max_length=50, blank=True)

    # Detection-window averages
    dacc = _unit_interval()
    fpr = _unit_interval()
    fnr = _unit_interval()
    f1 = _unit_interval()
    final_tacc = _unit_interval()
    final_asr = _unit_interval()

    summary = models.TextField(blank=True, null=True)  # JSON string of the full summary row
    malicious_clients = models.TextField(blank=True, null=True)  # JSON list of client ids
    duration = models.FloatField(null=True, blank=True, help_text="Wall time in seconds")
    error_message = models.TextField(blank=True, null=True)

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['attack'], name='run_attack_idx'),
            models.Index(fields=['detector'], name='run_detector_idx'),
            models.Index(fields=['status'], name='run_status_idx'),
            models.Index(fields=['created_at'], name='run_created_idx'),
        ]

    def __str__(self):
        return f"{self.name} (seed {self.seed})"

    def get_config_dict(self):
        try:
            return json.loads(self.config) if self.config else {}
        except json.JSONDecodeError:
            return {}

    def set_config_dict(self, config):
        self.config = json.dumps(config, sort_keys=True)

    def get_summary_dict(self):
        try:
            return json.loads(self.summary) if self.summary else {}
        except json.JSONDecodeError:
            return {}

    def get_malicious_list(self):
        try:
            return json.loads(self.malicious_clients) if self.malicious_clients else []
        except json.JSONDecodeError:
            return []

    def mark_failed(self, message):
        self.status = 'failed'
        self.error_message = message
        self.save(update_fields=['status', 'error_message', 'updated_at'])

    def store_result(self, result):
        """Copy an engine ``ExperimentResult`` into this run and its round records."""
        summary = result.summary
        self.status = 'completed'
        self.dacc = summary.get('dacc')
        self.fpr = summary.get('fpr')
        self.fnr = summary.get('fnr')
        self.f1 = summary.get('f1')
        self.final_tacc = summary.get('final_tacc')
        self.final_asr = summary.get('final_asr')
        self.summary = json.dumps(summary)
        self.malicious_clients = json.dumps(list(result.malicious_ids))
        self.duration = result.duration
        self.save()
        RoundRecord.objects.bulk_create([
            RoundRecord.from_report(self, report) for report in result.reports
        ])
        return self


class RoundRecord(models.Model):
    """One federated round of a stored run."""
    PHASE_CHOICES = [
        ('trajectory', 'Trajectory collection'),
        ('detection', 'Detection'),
        ('none', 'Undefended'),
    ]

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='rounds')
    round_index = models.PositiveIntegerField()
    phase = models.CharField(max_length=20, choices=PHASE_CHOICES)
    participants = models.PositiveIntegerField(default=0)
    flagged = models.PositiveIntegerField(default=0)

    dacc = _unit_interval()
    fpr = _unit_interval()
    fnr = _unit_interval()
    precision = _unit_interval()
    recall = _unit_interval()
    f1 = _unit_interval()
    tacc = _unit_interval()
    asr = _unit_interval()

    verdicts = models.TextField(blank=True, null=True)  # JSON list, one verdict per client
    losses = models.TextField(blank=True, null=True)  # JSON list of synthetic-set losses

    class Meta:
        ordering = ['run', 'round_index']
        unique_together = ['run', 'round_index']

    def __str__(self):
        return f"{self.run.name} - round {self.round_index}"

    @classmethod
    def from_report(cls, run, report):
        record = cls(
            run=run,
            round_index=report.t,
            phase=report.phase,
            participants=report.n_participants,
            flagged=report.n_flagged,
            dacc=report.dacc,
            fpr=report.fpr,
            fnr=report.fnr,
            precision=report.precision,
            recall=report.recall,
            f1=report.f1,
            tacc=report.tacc,
            asr=report.asr,
        )
        record.set_verdicts_list(report.verdicts)
        record.set_losses_list(report.losses or [])
        return record

    def get_verdicts_list(self):
        try:
            return json.loads(self.verdicts) if self.verdicts else []
        except json.JSONDecodeError:
            return []

    def set_verdicts_list(self, verdicts):
        self.verdicts = json.dumps(list(verdicts))

    def get_losses_list(self):
        try:
            return json.loads(self.losses) if self.losses else []
        except json.JSONDecodeError:
            return []

    def set_losses_list(self, losses):
        self.losses = json.dumps(list(losses))
