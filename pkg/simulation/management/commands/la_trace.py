"""
Management command to dump the modulation-order walk of the link
adaptation for one drop.

Usage:
    python manage.py la_trace --config scenarios/ref4ue.json
    python manage.py la_trace --config scenarios/ref4ue.json --drop 2 --mode full
"""
from core.errors import ConfigurationError
from simulation.management.commands._simulation import SimulationCommand
from simulation.services.harness import run_simulation
from simulation.services.outputs import write_la_trace, write_slots


class Command(SimulationCommand):
    help = 'Trace every MCS selection pass of a single drop'
    command_name = 'la_trace'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--drop', type=int, default=0, help='Drop index to trace')
        parser.add_argument(
            '--mode',
            choices=['full', 'abstract'],
            default='abstract',
            help='Data path driving the outer loop',
        )

    def run(self, **options):
        config = self.load_config(options)
        drop = options['drop']
        if not 0 <= drop < config.drops:
            raise ConfigurationError(f'--drop must lie in [0, {config.drops - 1}], got {drop}')
        out_dir = self.output_dir(options, config)
        workers = options['workers']

        with self.registered(config, out_dir, workers) as outcome:
            run = run_simulation(config, options['mode'], workers=workers, options={'trace': True}, drops=[drop])
            files = [write_la_trace(run, out_dir), write_slots(run, out_dir)]
            passes = sum(len(slot.trace) for slot in run.slot_results)
            outcome['summary'] = {'drop': drop, 'evaluations': passes}
            outcome['files'] = files

        self.stdout.write(self.style.SUCCESS(f'Traced {passes} criterion checks of drop {drop} into {out_dir}'))
