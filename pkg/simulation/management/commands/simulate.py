"""
Management command for the full-chain closed-loop simulation.

Usage:
    python manage.py simulate --config scenarios/ref4ue.json
    python manage.py simulate --config scenarios/hybrid_mix.json --gamma 0.9 --workers 4
    python manage.py simulate --config scenarios/ref4ue.json --detector kbest32 --pdf
"""
from simulation.management.commands._simulation import SimulationCommand
from simulation.services.harness import run_full_sim
from simulation.services.outputs import write_metrics, write_slots
from simulation.services.pdf_report import generate_run_report


class Command(SimulationCommand):
    help = 'Run the full transceiver chain with BMDR link adaptation and write metrics CSVs'
    command_name = 'simulate'
    supports_pdf = True

    def run(self, **options):
        config = self.load_config(options)
        out_dir = self.output_dir(options, config)
        workers = options['workers']
        self.stdout.write(f'Simulating {config.name} ({config.scheme}) into {out_dir}')

        with self.registered(config, out_dir, workers) as outcome:
            run = run_full_sim(config, workers=workers)
            files = write_metrics(run, out_dir) + [write_slots(run, out_dir)]
            if options.get('pdf'):
                files.append(generate_run_report([run], out_dir / 'report.pdf'))
            outcome['summary'] = run.report.summary()
            outcome['files'] = files

        self.report(run.report)
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(files)} files to {out_dir}'))
