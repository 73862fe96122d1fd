import tempfile
from unittest import TestCase as UnitTestCase
from unittest.mock import patch

import numpy as np

from core.errors import ConfigurationError, InvalidArgument, TargetUnreachable
from phy.services.bmdr import (
    BmdrCerTable,
    BmdrEstimate,
    BmdrPredictor,
    TableStore,
    bmdr_of_set,
    estimate_bmdr_mc,
    predict_bmdr,
    predict_bmdr_per_re,
    target_bmdr,
)
from phy.services.channel import assemble, complex_gaussian
from phy.services.detect import DetectorOutput, DetectorSpec
from phy.services.mi_curves import MiCurves, bicm_mutual_information

LMMSE = DetectorSpec.parse('lmmse')
MLD = DetectorSpec.parse('mld')


def siso(snr_linear, n_re=1):
    return assemble([np.ones((n_re, 1, 1), dtype=complex)], [snr_linear])


class MonteCarloBmdrTests(UnitTestCase):
    def test_uninformative_detector_gives_exactly_zero(self):
        h = siso(1.0, n_re=3)

        def zero_llrs(spec, y, h, constellations, clip_limit=None):
            return DetectorOutput(llrs=[np.zeros((y.shape[0], 2))], post_eq_sinr=None, detector_id='zero')

        with patch('phy.services.bmdr.run_detector', side_effect=zero_llrs):
            estimate = estimate_bmdr_mc(MLD, h, [2], 50, np.random.default_rng(0))
        self.assertEqual(estimate.value[0], 0.0)
        self.assertEqual(estimate.std_err[0], 0.0)
        self.assertEqual(estimate.sample_count, 150)

    def test_noiseless_saturation(self):
        estimate = estimate_bmdr_mc(MLD, siso(1e4), [2], 200, np.random.default_rng(1))
        self.assertGreaterEqual(estimate.value[0], 0.999)

    def test_matches_bicm_mutual_information(self):
        estimate = estimate_bmdr_mc(MLD, siso(1.0), [2], 10000, np.random.default_rng(2))
        self.assertAlmostEqual(2 * estimate.value[0], bicm_mutual_information(2, 1.0), delta=0.02)

    def test_requires_samples(self):
        with self.assertRaises(InvalidArgument):
            estimate_bmdr_mc(MLD, siso(1.0), [2], 0, np.random.default_rng(3))

    def test_modulation_count_must_match(self):
        with self.assertRaises(InvalidArgument):
            estimate_bmdr_mc(MLD, siso(1.0), [2, 2], 10, np.random.default_rng(3))


class BmdrOfSetTests(UnitTestCase):
    def test_mean(self):
        self.assertAlmostEqual(bmdr_of_set([0.2, 0.6]).value[0], 0.4, places=15)
        self.assertAlmostEqual(bmdr_of_set([0.3, 0.3, 0.3]).value[0], 0.3, places=15)

    def test_empty_set(self):
        with self.assertRaises(InvalidArgument):
            bmdr_of_set([])

    def test_concatenation_is_weighted_mean_of_parts(self):
        a, b = [0.1, 0.5, 0.9], [0.2, 0.4]
        whole = bmdr_of_set(a + b).value[0]
        parts = bmdr_of_set([np.mean(a), np.mean(b)], weights=[3, 2]).value[0]
        self.assertAlmostEqual(whole, parts, places=12)

    def test_accepts_estimates(self):
        estimates = [
            BmdrEstimate(value=[0.2, 0.4], std_err=[0.01, 0.01], sample_count=10),
            BmdrEstimate(value=[0.6, 0.8], std_err=[0.01, 0.01], sample_count=10),
        ]
        combined = bmdr_of_set(estimates)
        np.testing.assert_allclose(combined.value, [0.4, 0.6])
        self.assertEqual(combined.sample_count, 20)

    def test_values_outside_unit_interval_rejected(self):
        with self.assertRaises(InvalidArgument):
            BmdrEstimate(value=[1.2], std_err=[0.0], sample_count=1)


class PredictorTests(UnitTestCase):
    def setUp(self):
        grid = np.array([-10.0, 0.0, 10.0, 20.0])
        self.curves = MiCurves(snr_db=grid, values={
            2: np.array([0.1, 0.5, 1.5, 2.0]),
            4: np.array([0.2, 1.0, 2.5, 3.9]),
        })

    def test_mi_table_at_curve_knot(self):
        # scalar channel with gain 1 has LMMSE SINR 1 (0 dB)
        p = BmdrPredictor(kind='mi_table', detector=LMMSE, curves=self.curves)
        estimate = predict_bmdr(p, [2], siso(1.0))
        self.assertAlmostEqual(estimate.value[0], 0.25, places=12)

    def test_mi_table_needs_linear_detector(self):
        with self.assertRaises(InvalidArgument):
            BmdrPredictor(kind='mi_table', detector=MLD)

    def test_dimension_mismatch(self):
        p = BmdrPredictor(kind='mi_table', detector=LMMSE, curves=self.curves)
        with self.assertRaises(InvalidArgument):
            predict_bmdr(p, [2, 4], siso(1.0))

    def test_mi_table_is_separable(self):
        rng = np.random.default_rng(4)
        h = assemble([complex_gaussian(rng, (6, 4, 1)) for _ in range(3)], [5.0, 5.0, 5.0])
        p = BmdrPredictor(kind='mi_table', detector=LMMSE, curves=self.curves)
        a = predict_bmdr_per_re(p, [2, 2, 2], h)
        b = predict_bmdr_per_re(p, [2, 4, 2], h)
        np.testing.assert_array_equal(a[:, 0], b[:, 0])
        np.testing.assert_array_equal(a[:, 2], b[:, 2])
        self.assertFalse(np.array_equal(a[:, 1], b[:, 1]))

    def test_monte_carlo_needs_rng(self):
        p = BmdrPredictor(kind='monte_carlo', detector=MLD, n_samples=4)
        with self.assertRaises(InvalidArgument):
            predict_bmdr(p, [2], siso(1.0))

    def test_mi_table_agrees_with_lmmse_monte_carlo(self):
        rng = np.random.default_rng(5)
        h = assemble([complex_gaussian(rng, (30, 4, 1)) for _ in range(4)], [10.0] * 4)
        table = predict_bmdr(BmdrPredictor(kind='mi_table', detector=LMMSE), [2] * 4, h)
        monte_carlo = estimate_bmdr_mc(LMMSE, h, [2] * 4, 200, rng)
        self.assertLess(np.max(np.abs(table.value - monte_carlo.value)), 0.03)


def reference_table(n=648, m=2, rate='1/3', shift=0.0):
    return BmdrCerTable.from_rows(rate, n, m, [
        (0.0, 0.40 + shift, 0.2, 1000, 100),
        (1.0, 0.45 + shift, 1e-3, 1000, 100),
        (2.0, 0.50 + shift, 1e-4, 10000, 100),
    ])


class BmdrCerTableTests(UnitTestCase):
    def test_target(self):
        self.assertEqual(reference_table().target(1e-3), 0.45)

    def test_target_unreachable(self):
        with self.assertRaises(TargetUnreachable) as ctx:
            reference_table().target(1e-6)
        self.assertEqual(ctx.exception.query[0], 2)

    def test_isotonic_cleanup(self):
        table = BmdrCerTable.from_rows('1/2', 720, 2, [
            (0.0, 0.3, 0.5, 100, 10),
            (1.0, 0.4, 0.1, 100, 10),
            (2.0, 0.5, 0.2, 100, 10),
            (3.0, 0.6, 0.0, 100, 10),
        ])
        cleaned = table.cleaned_cer()
        self.assertTrue(np.all(np.diff(cleaned) <= 0))
        np.testing.assert_allclose(cleaned, [0.5, 0.15, 0.15, 0.0])
        self.assertEqual(table.target(0.2), 0.4)

    def test_rows_sorted_by_bmdr(self):
        table = BmdrCerTable.from_rows('1/2', 720, 2, [(2.0, 0.6, 0.0, 1, 1), (0.0, 0.3, 0.5, 1, 1)])
        np.testing.assert_array_equal(table.bmdr, [0.3, 0.6])

    def test_snr_queries(self):
        table = reference_table()
        self.assertEqual(table.snr_threshold(1e-3), 1.0)
        self.assertEqual(table.cer_at_snr(1.4), 1e-3)
        self.assertEqual(table.cer_at_snr(1.5), 1e-3)

    def test_csv_round_trip(self):
        table = reference_table()
        with tempfile.TemporaryDirectory() as tmp:
            path = table.to_csv(tmp)
            self.assertEqual(path.name, 'bmdr_cer_m2_r1-3_n648.csv')
            loaded = BmdrCerTable.from_csv(path)
        self.assertEqual(loaded.code_id, 'r1-3_n648')
        np.testing.assert_allclose(loaded.bmdr, table.bmdr)
        np.testing.assert_allclose(loaded.cer, table.cer)

    def test_foreign_csv_rejected(self):
        with tempfile.NamedTemporaryFile('w', suffix='.csv', delete=False) as handle:
            handle.write('snr_db,bmdr\n1,2\n')
        with self.assertRaises(ConfigurationError):
            BmdrCerTable.from_csv(handle.name)


class TableStoreTests(UnitTestCase):
    def setUp(self):
        self.store = TableStore([
            reference_table(n=600, shift=0.05),
            reference_table(n=1200, shift=-0.01),
        ])

    def test_exact_length(self):
        self.assertAlmostEqual(target_bmdr(self.store, 2, '1/3', 600, 1e-3), 0.50, places=12)

    def test_interpolation_in_inverse_length(self):
        lookup = self.store.target(2, '1/3', 800, 1e-3)
        self.assertTrue(lookup.interpolated)
        self.assertAlmostEqual(lookup.value, 0.47, places=12)

    def test_nearest_length_outside_range(self):
        lookup = self.store.target(2, '1/3', 2000, 1e-3)
        self.assertEqual(lookup.flags, ['nearest_n'])
        self.assertAlmostEqual(lookup.value, 0.44, places=12)

    def test_qpsk_fallback(self):
        lookup = self.store.target(4, '1/3', 1200, 1e-3)
        self.assertTrue(lookup.qpsk_fallback)
        self.assertTrue(self.store.table_for(6, '1/3', 1200).qpsk_fallback)

    def test_missing_rate(self):
        with self.assertRaises(ConfigurationError):
            self.store.target(2, '1/2', 600, 1e-3)
        self.assertFalse(self.store.covers(2, '1/2', 600))
        self.assertTrue(self.store.covers(2, '1/3', 900))

    def test_from_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            reference_table(n=600).to_csv(tmp)
            store = TableStore.from_directory(tmp)
        self.assertEqual(len(store), 1)
        self.assertIsNotNone(store.get(2, '1/3', 600))
