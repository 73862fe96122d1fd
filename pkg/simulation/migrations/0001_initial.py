# Generated by Django 6.0 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('build_table', 'Build BMDR-CER table'), ('simulate', 'Full-chain simulation'), ('abstract', 'Abstracted simulation'), ('compare', 'Full vs abstracted comparison'), ('calibrate_beta', 'EESM beta calibration'), ('la_trace', 'Link-adaptation trace')], max_length=20)),
                ('scenario_name', models.CharField(blank=True, max_length=200)),
                ('scheme', models.CharField(blank=True, max_length=50)),
                ('seed', models.BigIntegerField()),
                ('workers', models.PositiveIntegerField(default=1)),
                ('config_hash', models.CharField(max_length=64)),
                ('code_version', models.CharField(max_length=20)),
                ('output_dir', models.CharField(max_length=500)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=10)),
                ('error_message', models.TextField(blank=True)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('files', models.JSONField(blank=True, default=list)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['command', '-created_at'], name='simulation_command_idx'), models.Index(fields=['config_hash'], name='simulation_config_idx')],
            },
        ),
    ]
