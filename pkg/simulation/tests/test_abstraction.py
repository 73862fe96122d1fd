import tempfile
from pathlib import Path
from unittest import TestCase as UnitTestCase

import numpy as np

from core.errors import ConfigurationError, InvalidArgument
from phy.services.bmdr import BmdrCerTable, TableStore
from simulation.services.abstraction import (
    AbstractionResult,
    AwgnSnrMap,
    BetaTable,
    EsmConfig,
    abstract_esm,
    bler,
    compose_tb,
    esm_effective_sinr,
    estimate_throughput,
    map_cer,
)

ROWS = [
    (0.0, 0.25, 0.9, 1000, 100),
    (1.0, 0.5, 0.3, 1000, 100),
    (2.0, 0.625, 0.01, 1000, 100),
    (3.0, 0.75, 0.001, 1000, 100),
]


def qpsk_table():
    return BmdrCerTable.from_rows('1/2', 720, 2, ROWS)


class EffectiveSinrTests(UnitTestCase):
    def test_flat_channel_is_a_fixed_point(self):
        sinrs = np.full(8, 3.5)
        for family in ('cesm', 'eesm', 'lesm'):
            rho, clamped = esm_effective_sinr(sinrs, EsmConfig(family=family))
            self.assertAlmostEqual(rho, 3.5, places=9, msg=family)
            self.assertFalse(clamped)

    def test_eesm_is_dominated_by_weak_res(self):
        rho, _ = esm_effective_sinr([0.1, 100.0], EsmConfig.eesm(1.0))
        self.assertLess(rho, 1.0)
        self.assertGreater(rho, 0.1)

    def test_eesm_stays_finite_for_large_sinrs(self):
        rho, _ = esm_effective_sinr([1e4, 2e4], EsmConfig.eesm(1.0))
        self.assertTrue(np.isfinite(rho))
        self.assertGreaterEqual(rho, 1e4 - 1e-6)

    def test_weights_repeat_entries(self):
        weighted, _ = esm_effective_sinr([1.0, 4.0], EsmConfig.eesm(2.0), weights=[3, 1])
        repeated, _ = esm_effective_sinr([1.0, 1.0, 1.0, 4.0], EsmConfig.eesm(2.0))
        self.assertAlmostEqual(weighted, repeated, places=12)

    def test_larger_beta_trusts_strong_res_more(self):
        low, _ = esm_effective_sinr([0.5, 20.0], EsmConfig.eesm(0.5))
        high, _ = esm_effective_sinr([0.5, 20.0], EsmConfig.eesm(10.0))
        self.assertGreater(high, low)

    def test_rejects_bad_input(self):
        with self.assertRaises(InvalidArgument):
            esm_effective_sinr([], EsmConfig())
        with self.assertRaises(InvalidArgument):
            esm_effective_sinr([-1.0], EsmConfig())
        with self.assertRaises(InvalidArgument):
            EsmConfig(family='xesm')
        with self.assertRaises(InvalidArgument):
            EsmConfig.eesm(0.0)

    def test_miesm_needs_modulation(self):
        with self.assertRaises(InvalidArgument):
            esm_effective_sinr([1.0], EsmConfig(family='miesm'))


class MapCerTests(UnitTestCase):
    def test_nearest_row(self):
        table = qpsk_table()
        self.assertEqual(map_cer(table, 0.58), 0.01)
        self.assertEqual(map_cer(table, 0.95), 0.001)

    def test_ties_go_to_the_lower_bmdr(self):
        self.assertEqual(map_cer(qpsk_table(), 0.5625), 0.3)

    def test_log_interpolation_lies_between_rows(self):
        value = map_cer(qpsk_table(), 0.6875, log_interp=True)
        self.assertAlmostEqual(value, np.sqrt(0.01 * 0.001), places=9)


class TransportBlockTests(UnitTestCase):
    def test_compose(self):
        self.assertAlmostEqual(compose_tb([0.1, 0.2]), 1 - 0.9 * 0.8)
        self.assertEqual(compose_tb([0.0, 0.0]), 0.0)
        self.assertEqual(compose_tb([1.0, 0.0]), 1.0)

    def test_compose_rejects_invalid_probabilities(self):
        with self.assertRaises(InvalidArgument):
            compose_tb([])
        with self.assertRaises(InvalidArgument):
            compose_tb([1.5])

    def test_bler_is_mean(self):
        self.assertAlmostEqual(bler([0.0, 0.5, 1.0]), 0.5)

    def test_expected_throughput(self):
        # 2 slots of 1 ms, 1000 + 500 expected bits
        value = estimate_throughput([1000, 1000], [0.0, 0.5], slots=2, t_slot=1e-3)
        self.assertAlmostEqual(value, 0.75)

    def test_expected_throughput_rejects_mismatch(self):
        with self.assertRaises(InvalidArgument):
            estimate_throughput([1000], [0.1, 0.2], slots=1, t_slot=1e-3)
        with self.assertRaises(InvalidArgument):
            estimate_throughput([1000], [0.1], slots=0, t_slot=1e-3)

    def test_result_accumulates(self):
        result = AbstractionResult(ue=0)
        self.assertEqual(result.throughput(1, 1e-3), 0.0)
        result.add_tb([0.0, 0.5], [100, 100])
        result.add_tb([0.0], [200])
        self.assertAlmostEqual(result.bler, 0.25)
        self.assertAlmostEqual(result.throughput(2, 1e-3), 0.175)


class AwgnSnrMapTests(UnitTestCase):
    def setUp(self):
        self.store = TableStore([qpsk_table()])

    def test_threshold_from_snr_column(self):
        snr_map = AwgnSnrMap(self.store, 0.01)
        self.assertEqual(snr_map.threshold_db(2, '1/2', 720), 2.0)
        self.assertEqual(snr_map(2, '1/2', 720), 2.0)

    def test_unreachable_threshold_is_infinite(self):
        self.assertEqual(AwgnSnrMap(self.store, 1e-4).threshold_db(2, '1/2', 720), np.inf)

    def test_cer_at_snr(self):
        snr_map = AwgnSnrMap(self.store, 0.01)
        self.assertEqual(snr_map.cer(2, '1/2', 720, 10 ** 0.09), 0.3)

    def test_abstract_esm_flat_channel(self):
        snr_map = AwgnSnrMap(self.store, 0.01)
        p_hat, rho, clamped = abstract_esm(np.full(4, 10 ** 0.3), EsmConfig.eesm(1.0), 2, '1/2', 720, snr_map)
        self.assertEqual(p_hat, 0.001)
        self.assertAlmostEqual(rho, 10 ** 0.3)
        self.assertFalse(clamped)


class BetaTableTests(UnitTestCase):
    def test_defaults_to_one(self):
        self.assertEqual(BetaTable({3: 2.5}).beta(4), 1.0)
        self.assertEqual(BetaTable({3: 2.5}).beta(3), 2.5)

    def test_rejects_non_positive_beta(self):
        with self.assertRaises(InvalidArgument):
            BetaTable({1: 0.0})

    def test_csv_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = BetaTable({1: 1.5, 7: 3.25}).to_csv(Path(tmp) / 'betas.csv')
            loaded = BetaTable.from_csv(path)
            self.assertEqual(loaded.betas, {1: 1.5, 7: 3.25})

    def test_malformed_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'betas.csv'
            path.write_text('mcs_index,beta\n1,abc\n')
            with self.assertRaises(ConfigurationError):
                BetaTable.from_csv(path)
