"""
Management command to build the AWGN BMDR-CER tables of a table scenario.

Usage:
    python manage.py build_table --config scenarios/awgn.json
    python manage.py build_table --config scenarios/awgn.json --out tables/ --workers 8
"""
from dataclasses import replace
from pathlib import Path

from core.commands import LinkSimCommand
from phy.services.bmdr import BmdrCerTable
from simulation.services.outputs import finish_run, start_run, write_manifest
from simulation.services.scenario import load_table_job
from simulation.services.tables import run_table_job


class Command(LinkSimCommand):
    help = 'Simulate coded SISO-AWGN links and write BMDR-CER tables as CSV'

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        self.add_run_arguments(parser)

    def run(self, **options):
        job = load_table_job(options['config'])
        if options.get('seed') is not None:
            job = replace(job, seed=options['seed'])
        out_dir = Path(options['out']) if options.get('out') else job.table_dir
        workers = options['workers']
        self.stdout.write(
            f'Building {len(job.codes) * len(job.modulations)} tables '
            f'({job.cw_budget} codewords per SNR point) into {out_dir}'
        )

        record = start_run('build_table', job, job.seed, workers, out_dir)
        try:
            paths = run_table_job(job, out_dir, workers)
        except Exception as exc:
            finish_run(record, error=str(exc) or type(exc).__name__)
            raise

        summary = {}
        for path in paths:
            table = BmdrCerTable.from_csv(path)
            self.stdout.write(
                f'  {path.name}: {table.size} rows, BMDR {table.bmdr.min():.3f} .. {table.bmdr.max():.3f}'
            )
            summary[path.name] = table.size
        files = list(paths) + [write_manifest(out_dir, 'build_table', job, job.seed, workers, paths)]
        finish_run(record, summary, files)
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(paths)} tables to {out_dir}'))
