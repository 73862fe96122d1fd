"""
Management command to write the built-in LDPC codes as alist files.

Files are named after the code id (e.g. r1-2_n720.alist). Placed in
LINKSIM_CODE_DIR they replace the built-in construction, so a code
family can be frozen or swapped for an external one.

Usage:
    python manage.py generate_alist
    python manage.py generate_alist --rates 1/3,1/2 --lengths 648,1800
    python manage.py generate_alist --out /tmp/codes
"""
from pathlib import Path

from core.commands import LinkSimCommand
from core.errors import ConfigurationError, InvalidArgument
from phy.services.alist import write_alist
from phy.services.coding import build_code, get_code_dir, parse_rate

DEFAULT_RATES = '1/4,1/3,1/2,3/5,2/3,3/4,4/5,5/6'
DEFAULT_LENGTHS = '720,1440,2160'


class Command(LinkSimCommand):
    help = 'Write LDPC parity-check matrices for a grid of rates and lengths as alist files'

    def add_arguments(self, parser):
        parser.add_argument(
            '--rates',
            type=str,
            default=DEFAULT_RATES,
            help='Comma-separated nominal rates, e.g. 1/3,1/2',
        )
        parser.add_argument(
            '--lengths',
            type=str,
            default=DEFAULT_LENGTHS,
            help='Comma-separated codeword lengths',
        )
        parser.add_argument('--out', type=str, help='Output directory (default LINKSIM_CODE_DIR)')

    def run(self, **options):
        try:
            rates = [parse_rate(text) for text in options['rates'].split(',') if text.strip()]
            lengths = [int(text) for text in options['lengths'].split(',') if text.strip()]
        except (InvalidArgument, ValueError) as exc:
            raise ConfigurationError(f'Invalid --rates/--lengths: {exc}') from exc

        out_dir = Path(options['out']) if options.get('out') else get_code_dir()
        self.stdout.write(f'Writing {len(rates) * len(lengths)} codes to {out_dir}')

        for rate in rates:
            for n in lengths:
                code = build_code(rate, n)
                path = write_alist(code.parity_check, out_dir / f'{code.code_id}.alist')
                self.stdout.write(f'  {code.code_id}: k={code.k}, rate {code.exact_rate:.4f} -> {path.name}')

        self.stdout.write(self.style.SUCCESS(f'Wrote {len(rates) * len(lengths)} alist files'))
