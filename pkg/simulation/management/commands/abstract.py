"""
Management command for the abstracted closed-loop simulation: the same
link adaptation as simulate, with decoding replaced by table lookups.

Usage:
    python manage.py abstract --config scenarios/ref4ue.json
    python manage.py abstract --config scenarios/ref4ue.json --detector mld --out runs/mld
"""
from simulation.management.commands._simulation import SimulationCommand
from simulation.services.harness import run_abstracted_sim
from simulation.services.outputs import write_abstraction, write_metrics, write_slots
from simulation.services.pdf_report import generate_run_report


class Command(SimulationCommand):
    help = 'Run the closed loop with PHY abstraction and write metrics CSVs'
    command_name = 'abstract'
    supports_pdf = True

    def run(self, **options):
        config = self.load_config(options)
        out_dir = self.output_dir(options, config)
        workers = options['workers']
        self.stdout.write(f'Abstracted run of {config.name} ({config.scheme}) into {out_dir}')

        with self.registered(config, out_dir, workers) as outcome:
            run = run_abstracted_sim(config, workers=workers)
            files = write_metrics(run, out_dir) + [write_slots(run, out_dir), write_abstraction(run, out_dir)]
            if options.get('pdf'):
                files.append(generate_run_report([run], out_dir / 'report.pdf'))
            outcome['summary'] = run.report.summary()
            outcome['files'] = files

        self.report(run.report)
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(files)} files to {out_dir}'))
