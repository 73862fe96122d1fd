"""
Management command for a paired full-chain vs abstracted run of one
scenario and seed, with per-UE agreement statistics.

Usage:
    python manage.py compare --config scenarios/ref4ue.json
    python manage.py compare --config scenarios/ref4ue.json --detector kbest32 --pdf
"""
from simulation.management.commands._simulation import SimulationCommand
from simulation.services.harness import run_abstracted_sim, run_full_sim
from simulation.services.outputs import agreement, write_agreement, write_metrics
from simulation.services.pdf_report import generate_run_report


class Command(SimulationCommand):
    help = 'Compare full-chain and abstracted simulations of the same scenario'
    command_name = 'compare'
    supports_pdf = True

    def run(self, **options):
        config = self.load_config(options)
        out_dir = self.output_dir(options, config)
        workers = options['workers']
        self.stdout.write(f'Comparing full and abstracted runs of {config.name} into {out_dir}')

        with self.registered(config, out_dir, workers) as outcome:
            full = run_full_sim(config, workers=workers)
            abstracted = run_abstracted_sim(config, workers=workers)
            result = agreement(full, abstracted)
            files = (
                write_metrics(full, out_dir, prefix='full_')
                + write_metrics(abstracted, out_dir, prefix='abstract_')
                + write_agreement(result, out_dir, comments=[f'linksim compare; scenario={config.name}'])
            )
            if options.get('pdf'):
                files.append(generate_run_report([full, abstracted], out_dir / 'report.pdf', agreement=result['summary']))
            outcome['summary'] = result['summary']
            outcome['files'] = files

        self.report(full.report, 'full')
        self.report(abstracted.report, 'abstract')
        p95 = result['summary']['error_p95']
        if p95 is not None:
            self.stdout.write(f'Normalized throughput error: P95 {p95:.4f}, P99 {result["summary"]["error_p99"]:.4f}')
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(files)} files to {out_dir}'))
