"""
Shared plumbing of the scenario-driven commands: argument parsing,
scenario loading with command-line overrides, and run registration.
"""
from contextlib import contextmanager
from pathlib import Path

from core.commands import LinkSimCommand
from simulation.services.outputs import default_output_dir, finish_run, start_run, write_manifest
from simulation.services.scenario import load_sim_config


class SimulationCommand(LinkSimCommand):
    command_name = None
    supports_pdf = False

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        self.add_run_arguments(parser)
        parser.add_argument('--detector', type=str, help='Run a single detector, e.g. lmmse or kbest32')
        parser.add_argument('--gamma', type=float, help='Hybrid selection weight in [0, 1]')
        if self.supports_pdf:
            parser.add_argument('--pdf', action='store_true', help='Also render a PDF summary')

    def load_config(self, options):
        config = load_sim_config(options['config'])
        return config.with_overrides(
            seed=options.get('seed'),
            detector=options.get('detector'),
            gamma=options.get('gamma'),
        )

    def output_dir(self, options, config) -> Path:
        if options.get('out'):
            return Path(options['out'])
        return default_output_dir(self.command_name, config.name, config.seed)

    @contextmanager
    def registered(self, config, out_dir: Path, workers: int):
        """
        Record the run in the registry; the body fills outcome['summary']
        and outcome['files'], and the manifest is written on success.
        """
        record = start_run(self.command_name, config, config.seed, workers, out_dir)
        outcome = {'summary': {}, 'files': []}
        try:
            yield outcome
        except Exception as exc:
            finish_run(record, error=str(exc) or type(exc).__name__)
            raise
        manifest = write_manifest(out_dir, self.command_name, config, config.seed, workers, outcome['files'])
        outcome['files'].append(manifest)
        finish_run(record, outcome['summary'], outcome['files'])

    def report(self, report, label: str = ''):
        prefix = f'{label}: ' if label else ''
        self.stdout.write(
            f'{prefix}AM {report.am:.4f} Mbps, GM {report.gm:.4f} Mbps over {report.users} users'
        )
        if report.selection_accuracy is not None:
            self.stdout.write(f'{prefix}detector selection accuracy {report.selection_accuracy:.3f}')
