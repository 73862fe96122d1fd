from fractions import Fraction
from unittest import TestCase as UnitTestCase

import numpy as np

from core.errors import InvalidArgument
from phy.services.bmdr import BmdrCerTable, TableStore
from simulation.services.abstraction import AwgnSnrMap
from simulation.services.calibration import (
    BETA_BOUNDS,
    CalibrationSample,
    brier_score,
    calibrate_betas,
    fit_beta,
)

ROWS = [
    (-10.0, 0.2, 1.0, 100, 100),
    (0.0, 0.5, 1.0, 100, 100),
    (10.0, 0.8, 0.5, 100, 100),
    (20.0, 0.99, 0.0, 100, 100),
]


def store():
    return TableStore([BmdrCerTable.from_rows('1/2', 240, 2, ROWS)])


def sample(sinrs, decoded, index=3):
    sinrs = np.asarray(sinrs, dtype=float)
    return CalibrationSample(
        mcs_index=index, m=2, rate=Fraction(1, 2), n=240,
        sinrs=sinrs, weights=np.ones(sinrs.size), decoded=decoded,
    )


class BrierScoreTests(UnitTestCase):
    def setUp(self):
        self.snr_map = AwgnSnrMap(store(), 0.01, log_interp=True)

    def test_certain_failure_scores_zero_for_a_failed_codeword(self):
        self.assertEqual(brier_score(1.0, [sample([0.01, 0.01], False)], self.snr_map), 0.0)

    def test_certain_failure_scores_one_for_a_decoded_codeword(self):
        self.assertEqual(brier_score(1.0, [sample([0.01, 0.01], True)], self.snr_map), 1.0)


class FitBetaTests(UnitTestCase):
    def setUp(self):
        self.snr_map = AwgnSnrMap(store(), 0.01, log_interp=True)

    def test_decoded_codewords_with_one_strong_re_push_beta_up(self):
        samples = [sample([0.1, 1000.0], True) for _ in range(5)]
        fit = fit_beta(samples, self.snr_map)
        self.assertGreater(fit.beta, 10.0)
        self.assertLessEqual(fit.beta, BETA_BOUNDS[1])
        self.assertLess(fit.brier, brier_score(1.0, samples, self.snr_map))
        self.assertEqual((fit.samples, fit.errors), (5, 0))

    def test_needs_samples_of_one_index(self):
        with self.assertRaises(InvalidArgument):
            fit_beta([], self.snr_map)
        with self.assertRaises(InvalidArgument):
            fit_beta([sample([1.0], True, 1), sample([1.0], True, 2)], self.snr_map)


class CalibrateBetasTests(UnitTestCase):
    def test_sparse_indices_keep_unit_beta(self):
        samples = [sample([0.1, 1000.0], True, 3) for _ in range(4)] + [sample([5.0], False, 4)]
        betas, fits = calibrate_betas(samples, store(), 0.01, min_samples=3)
        self.assertEqual([fit.mcs_index for fit in fits], [3])
        self.assertGreater(betas.beta(3), 10.0)
        self.assertEqual(betas.beta(4), 1.0)

    def test_no_samples(self):
        betas, fits = calibrate_betas([], store(), 0.01)
        self.assertEqual(fits, [])
        self.assertEqual(betas.betas, {})
