"""
Management command to compute the AWGN bit-MI curves used by the
mi_table BMDR predictor and by MIESM.

Usage:
    python manage.py generate_mi_curves
    python manage.py generate_mi_curves --out data/bit_mi_curves.csv
"""
from pathlib import Path

from core.commands import LinkSimCommand
from phy.services.mi_curves import compute_curves, get_curve_path, write_curves
from phy.services.modem import SUPPORTED_ORDERS


class Command(LinkSimCommand):
    help = 'Compute bit-level mutual-information curves of Gray QAM and write them as CSV'

    def add_arguments(self, parser):
        parser.add_argument('--out', type=str, help='Output file (default LINKSIM_MI_CURVE_PATH)')

    def run(self, **options):
        path = Path(options['out']) if options.get('out') else get_curve_path()
        self.stdout.write(f'Computing curves for m in {SUPPORTED_ORDERS}...')
        curves = compute_curves(SUPPORTED_ORDERS)
        write_curves(curves, path)
        for m in SUPPORTED_ORDERS:
            self.stdout.write(f'  m={m}: I ranges {curves.values[m][0]:.4f} .. {curves.values[m][-1]:.4f}')
        self.stdout.write(self.style.SUCCESS(f'Wrote {curves.snr_db.size} grid points to {path}'))
