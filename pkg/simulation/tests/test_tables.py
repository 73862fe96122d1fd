import tempfile
from fractions import Fraction
from pathlib import Path
from unittest import TestCase as UnitTestCase

import numpy as np

from core.errors import ConfigurationError, InvalidArgument
from phy.services.bmdr import BmdrCerTable, TableStore
from phy.services.coding import get_code
from simulation.services.mcs import McsEntry, McsTable
from simulation.services.scenario import table_job_from_dict
from simulation.services.tables import (
    awgn_bmdr,
    awgn_codeword_errors,
    build_awgn_table,
    check_tables,
    run_table_job,
    snr_grid_for,
)


class AwgnChainTests(UnitTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.code = get_code('1/2', 192)

    def test_high_snr_decodes_everything(self):
        errors = awgn_codeword_errors(self.code, 2, 12.0, 40, np.random.default_rng(0), batch_size=16)
        self.assertEqual(errors, 0)

    def test_very_low_snr_fails_everything(self):
        errors = awgn_codeword_errors(self.code, 2, -10.0, 20, np.random.default_rng(1))
        self.assertEqual(errors, 20)

    def test_length_must_fit_modulation(self):
        with self.assertRaises(InvalidArgument):
            awgn_codeword_errors(get_code('1/2', 190), 4, 0.0, 1, np.random.default_rng(2))

    def test_bmdr_grows_with_snr(self):
        low = awgn_bmdr(2, -2.0, 2000, np.random.default_rng(3)).value[0]
        high = awgn_bmdr(2, 10.0, 2000, np.random.default_rng(3)).value[0]
        self.assertLess(low, high)
        self.assertGreater(high, 0.99)


class BuildTableTests(UnitTestCase):
    def test_rows_per_snr_and_determinism(self):
        code = get_code('1/2', 192)
        args = (code, 2, [-4.0, 10.0], 20, 500, 5)
        table = build_awgn_table(*args)
        again = build_awgn_table(*args, workers=2)
        self.assertEqual(table.size, 2)
        np.testing.assert_array_equal(table.bmdr, again.bmdr)
        np.testing.assert_array_equal(table.cer, again.cer)
        self.assertEqual(table.cer[-1], 0.0)
        self.assertEqual(table.target(0.01), table.bmdr[-1])

    def test_rejects_empty_grid_and_budgets(self):
        code = get_code('1/2', 192)
        with self.assertRaises(InvalidArgument):
            build_awgn_table(code, 2, [], 10, 10, 1)
        with self.assertRaises(InvalidArgument):
            build_awgn_table(code, 2, [0.0], 0, 10, 1)

    def test_grid_centres_on_capacity(self):
        job = table_job_from_dict({
            'version': 1, 'kind': 'table', 'codes': [{'rate': '1/2', 'n': 192}],
            'snr_grid': {'start_offset_db': -1.0, 'stop_offset_db': 1.0, 'step_db': 0.5},
        })
        grid = snr_grid_for(job, Fraction(1, 2), 2)
        self.assertEqual(grid.size, 5)
        # QPSK at rate 1/2 needs 0 dB
        self.assertLessEqual(abs(grid[2]), 0.5)

    def test_job_writes_one_file_per_code_and_order(self):
        job = table_job_from_dict({
            'version': 1, 'kind': 'table', 'seed': 3,
            'codes': [{'rate': '1/2', 'n': 192}, {'rate': '1/3', 'n': 192}],
            'snr_grid': [0.0, 8.0], 'cw_budget': 5, 'mi_budget': 100,
        })
        with tempfile.TemporaryDirectory() as tmp:
            paths = run_table_job(job, tmp)
            self.assertEqual(sorted(p.name for p in paths), [
                'bmdr_cer_m2_r1-2_n192.csv', 'bmdr_cer_m2_r1-3_n192.csv',
            ])
            store = TableStore.from_directory(tmp)
        self.assertEqual(len(store), 2)
        self.assertEqual(store.get(2, '1/3', 192).size, 2)


class CheckTablesTests(UnitTestCase):
    ROWS = [(0.0, 0.4, 0.5, 100, 100), (1.0, 0.6, 0.0, 100, 100)]

    def setUp(self):
        self.mcs = McsTable([McsEntry(1, 2, Fraction(1, 3)), McsEntry(2, 2, Fraction(1, 2))])

    def test_exact_tables(self):
        store = TableStore([
            BmdrCerTable.from_rows('1/3', 20, 2, self.ROWS),
            BmdrCerTable.from_rows('1/2', 20, 2, self.ROWS),
        ])
        self.assertEqual(check_tables(store, self.mcs, 10, [1]), [])

    def test_nearest_length_is_reported(self):
        store = TableStore([
            BmdrCerTable.from_rows('1/3', 40, 2, self.ROWS),
            BmdrCerTable.from_rows('1/2', 20, 2, self.ROWS),
        ])
        fallbacks = check_tables(store, self.mcs, 10, [1])
        self.assertEqual(fallbacks, [(2, Fraction(1, 3), 20, ['nearest_n'])])

    def test_missing_rate_names_the_build_command(self):
        store = TableStore([BmdrCerTable.from_rows('1/2', 20, 2, self.ROWS)])
        with self.assertRaises(ConfigurationError) as caught:
            check_tables(store, self.mcs, 10, [1], scenario_path=Path('scenarios/x.json'))
        self.assertIn('build_table --config scenarios/x.json', str(caught.exception))
