from django.contrib import admin
from .models import SimulationRun


@admin.register(SimulationRun)
class SimulationRunAdmin(admin.ModelAdmin):
    list_display = ('command', 'scenario_name', 'scheme', 'seed', 'workers', 'status', 'created_at')
    list_filter = ('command', 'status', 'created_at')
    search_fields = ('scenario_name', 'config_hash', 'output_dir')
    readonly_fields = ('created_at', 'updated_at', 'completed_at', 'duration_seconds')
    ordering = ('-created_at',)

    fieldsets = (
        ('Run', {
            'fields': ('command', 'scenario_name', 'scheme', 'status', 'error_message')
        }),
        ('Reproducibility', {
            'fields': ('seed', 'workers', 'config_hash', 'code_version')
        }),
        ('Outputs', {
            'fields': ('output_dir', 'summary', 'files'),
            'classes': ('collapse',)
        }),
        ('Timestamps', {
            'fields': ('created_at', 'updated_at', 'completed_at', 'duration_seconds'),
            'classes': ('collapse',)
        }),
    )
