import tempfile
from fractions import Fraction
from pathlib import Path
from unittest import TestCase as UnitTestCase

from core.errors import ConfigurationError, InvalidArgument
from simulation.services.mcs import McsEntry, McsTable, default_mcs_table


class DefaultTableTests(UnitTestCase):
    def setUp(self):
        self.table = default_mcs_table()

    def test_shape(self):
        self.assertEqual(len(self.table), 12)
        self.assertEqual(self.table.modulations, [2, 4, 6])
        self.assertEqual(self.table.k_max, 3)
        self.assertEqual(self.table.m_max, 6)
        self.assertEqual(self.table.r_max, Fraction(5, 6))
        self.assertEqual(self.table.se_bound, 5)

    def test_spectral_efficiency_increases(self):
        se = [entry.se for entry in self.table]
        self.assertEqual(se, sorted(se))
        self.assertEqual(len(set(se)), len(se))

    def test_lookup(self):
        entry = self.table.entry(4, '3/4')
        self.assertEqual(entry.index, 8)
        self.assertIs(self.table.by_index(8), entry)
        self.assertEqual(self.table.rates_for(2), [Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3)])
        self.assertEqual(self.table.lowest.index, 1)
        self.assertEqual(self.table.highest.index, 12)

    def test_unknown_entries(self):
        with self.assertRaises(InvalidArgument):
            self.table.entry(2, '5/6')
        with self.assertRaises(InvalidArgument):
            self.table.by_index(99)
        with self.assertRaises(InvalidArgument):
            self.table.rates_for(8)

    def test_codeword_length_scales_with_order_and_layers(self):
        entry = self.table.entry(6, '2/3')
        self.assertEqual(entry.n_for(360), 2160)
        self.assertEqual(entry.n_for(360, n_t=2), 4320)
        self.assertEqual(entry.nominal_k(360), 1440)
        self.assertEqual(entry.modulation_index, 3)

    def test_codes_cover_every_length(self):
        codes = self.table.codes(360, [1])
        self.assertEqual(len(codes), 12)
        self.assertIn((2, Fraction(1, 4), 720), codes)
        self.assertIn((6, Fraction(5, 6), 2160), codes)


class TableValidationTests(UnitTestCase):
    def test_rejects_decreasing_efficiency(self):
        with self.assertRaises(InvalidArgument):
            McsTable([McsEntry(1, 2, Fraction(2, 3)), McsEntry(2, 4, Fraction(1, 4))])

    def test_rejects_gap_in_modulation_orders(self):
        with self.assertRaises(InvalidArgument):
            McsTable([McsEntry(1, 2, Fraction(1, 2)), McsEntry(2, 6, Fraction(1, 2))])

    def test_rejects_duplicate_index(self):
        with self.assertRaises(InvalidArgument):
            McsTable([McsEntry(1, 2, Fraction(1, 3)), McsEntry(1, 2, Fraction(1, 2))])

    def test_rejects_empty_table(self):
        with self.assertRaises(InvalidArgument):
            McsTable([])

    def test_qpsk_only_table(self):
        table = McsTable([McsEntry(1, 2, Fraction(1, 3)), McsEntry(2, 2, Fraction(1, 2))])
        self.assertEqual(table.k_max, 1)


class McsCsvTests(UnitTestCase):
    def test_written_table_reads_back(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = default_mcs_table().to_csv(Path(tmp) / 'mcs.csv', n_re=360)
            table = McsTable.from_csv(path)
        self.assertEqual([e.se for e in table], [e.se for e in default_mcs_table()])

    def test_shipped_qpsk_table(self):
        table = McsTable.from_csv(Path(__file__).resolve().parents[2] / 'scenarios' / 'qpsk_mcs.csv')
        self.assertEqual(table.modulations, [2])
        self.assertEqual(len(table), 3)

    def test_missing_column(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'mcs.csv'
            path.write_text('index,m\n1,2\n')
            with self.assertRaises(ConfigurationError):
                McsTable.from_csv(path)
