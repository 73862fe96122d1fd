"""
Management command to fit the per-MCS EESM beta against full-chain
outcomes of an LMMSE receiver.

Usage:
    python manage.py calibrate_beta --config scenarios/ref4ue.json
    python manage.py calibrate_beta --config scenarios/ref4ue.json --min-samples 50 --out betas/
"""
from core.csvio import write_csv
from simulation.management.commands._simulation import SimulationCommand
from simulation.services.calibration import calibrate_betas, collect_samples
from simulation.services.harness import run_full_sim


class Command(SimulationCommand):
    help = 'Fit EESM beta per MCS index from a full-chain LMMSE simulation'
    command_name = 'calibrate_beta'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--min-samples',
            type=int,
            default=20,
            help='Codewords an MCS needs before its beta is fitted',
        )

    def load_config(self, options):
        config = super().load_config(options)
        if config.scheme != 'lmmse-eesm' and [d.kind for d in config.detectors] != ['lmmse']:
            config = config.with_overrides(detector='lmmse')
        return config

    def run(self, **options):
        config = self.load_config(options)
        out_dir = self.output_dir(options, config)
        workers = options['workers']
        self.stdout.write(f'Collecting LMMSE SINR samples from {config.name}')

        with self.registered(config, out_dir, workers) as outcome:
            run = run_full_sim(config, workers=workers, options={'sinr_samples': True})
            samples = collect_samples(run)
            betas, fits = calibrate_betas(samples, run.store, config.target_cer, options['min_samples'])
            files = [
                betas.to_csv(out_dir / 'beta_table.csv'),
                write_csv(
                    out_dir / 'beta_fit.csv',
                    ['mcs_index', 'beta', 'brier', 'samples', 'errors'],
                    [(f.mcs_index, f.beta, f.brier, f.samples, f.errors) for f in fits],
                    comments=[f'linksim beta calibration; scenario={config.name}; seed={config.seed}'],
                ),
            ]
            outcome['summary'] = {'samples': len(samples), 'fitted': len(fits)}
            outcome['files'] = files

        for fit in fits:
            self.stdout.write(f'  MCS {fit.mcs_index}: beta {fit.beta:.3f} ({fit.samples} codewords, {fit.errors} errors)')
        self.stdout.write(self.style.SUCCESS(f'Fitted {len(fits)} betas from {len(samples)} codewords; wrote {out_dir}'))
