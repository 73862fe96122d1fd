from django.db import models
from django.utils import timezone


class SimulationRun(models.Model):
    """Registry entry for one management-command run and where its outputs went"""
    COMMAND_CHOICES = [
        ('build_table', 'Build BMDR-CER table'),
        ('simulate', 'Full-chain simulation'),
        ('abstract', 'Abstracted simulation'),
        ('compare', 'Full vs abstracted comparison'),
        ('calibrate_beta', 'EESM beta calibration'),
        ('la_trace', 'Link-adaptation trace'),
    ]
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    command = models.CharField(max_length=20, choices=COMMAND_CHOICES)
    scenario_name = models.CharField(max_length=200, blank=True)
    scheme = models.CharField(max_length=50, blank=True)

    # Reproducibility
    seed = models.BigIntegerField()
    workers = models.PositiveIntegerField(default=1)
    config_hash = models.CharField(max_length=64)
    code_version = models.CharField(max_length=20)

    output_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default='running')
    error_message = models.TextField(blank=True)

    # Headline numbers (AM/GM throughput, table rows, ...)
    summary = models.JSONField(default=dict, blank=True)
    files = models.JSONField(default=list, blank=True)

    # Timestamps
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['command', '-created_at'], name='simulation_command_idx'),
            models.Index(fields=['config_hash'], name='simulation_config_idx'),
        ]

    def __str__(self):
        return f"{self.command} {self.scenario_name} (seed {self.seed})"

    @property
    def duration_seconds(self):
        if not self.completed_at:
            return None
        return (self.completed_at - self.created_at).total_seconds()

    def mark_completed(self, summary=None, files=None):
        self.status = 'completed'
        self.summary = summary or {}
        self.files = files or []
        self.completed_at = timezone.now()
        self.save(update_fields=['status', 'summary', 'files', 'completed_at', 'updated_at'])

    def mark_failed(self, message):
        self.status = 'failed'
        self.error_message = message
        self.completed_at = timezone.now()
        self.save(update_fields=['status', 'error_message', 'completed_at', 'updated_at'])
