from dataclasses import dataclass
from unittest import TestCase as UnitTestCase

import numpy as np
from django.test import override_settings

from core.errors import InvalidArgument
from simulation.services.metrics import (
    arithmetic_mean,
    cdf_curve,
    compute_metrics,
    confidence_interval,
    confusion_matrix,
    geometric_mean,
    normalized_error,
    percentile_curve,
)


@dataclass
class SlotStub:
    detector: int
    best_detector: int = None


class DropStub:
    """The parts of a DropResult that compute_metrics reads"""

    def __init__(self, throughput, cer, mcs, slots):
        self._throughput = np.asarray(throughput, dtype=float)
        self._cer = np.asarray(cer, dtype=float)
        self._mcs = np.asarray(mcs)
        self.slots = slots

    def throughput(self, slots, t_slot, mode):
        return self._throughput

    def ue_cer(self, mode):
        return self._cer

    def mcs_indices(self):
        return self._mcs


class MeanTests(UnitTestCase):
    def test_means(self):
        self.assertAlmostEqual(arithmetic_mean([1.0, 4.0]), 2.5)
        self.assertAlmostEqual(geometric_mean([1.0, 4.0]), 2.0)

    def test_geometric_mean_floors_zero_throughput(self):
        self.assertAlmostEqual(geometric_mean([0.0, 4.0], floor=1.0), 2.0)

    def test_geometric_mean_never_exceeds_arithmetic_mean(self):
        self.assertEqual(geometric_mean([0.0, 0.0]), 0.0)
        self.assertAlmostEqual(geometric_mean([0.1, 0.1], floor=1.0), 0.1)

    @override_settings(LINKSIM_GM_FLOOR_MBPS=0.25)
    def test_geometric_mean_floor_from_settings(self):
        self.assertAlmostEqual(geometric_mean([0.0, 4.0]), 1.0)

    def test_empty_input(self):
        with self.assertRaises(InvalidArgument):
            arithmetic_mean([])
        with self.assertRaises(InvalidArgument):
            geometric_mean([])

    def test_confidence_interval(self):
        self.assertEqual(confidence_interval([3.0]), (3.0, 3.0))
        low, high = confidence_interval([1.0, 2.0, 3.0])
        self.assertLess(low, 2.0)
        self.assertGreater(high, 2.0)
        self.assertAlmostEqual(low + high, 4.0)


class DistributionTests(UnitTestCase):
    def test_cdf(self):
        x, fraction = cdf_curve([0.2, 0.1, 0.2, np.nan, 0.4])
        np.testing.assert_allclose(x, [0.1, 0.2, 0.4])
        np.testing.assert_allclose(fraction, [0.25, 0.75, 1.0])

    def test_cdf_of_nothing(self):
        x, fraction = cdf_curve([np.nan])
        self.assertEqual(x.size, 0)
        self.assertEqual(fraction.size, 0)

    def test_percentiles(self):
        q, values = percentile_curve(np.arange(1, 102), q=(0, 50, 100))
        np.testing.assert_allclose(q, [0, 50, 100])
        np.testing.assert_allclose(values, [1, 51, 101])

    def test_percentiles_of_nothing(self):
        with self.assertRaises(InvalidArgument):
            percentile_curve([])

    def test_confusion_matrix(self):
        matrix = confusion_matrix(selected=[0, 1, 1, 0], best=[0, 1, 0, 0], n_detectors=2)
        np.testing.assert_allclose(matrix, [[0.5, 0.25], [0.0, 0.25]])
        self.assertAlmostEqual(np.trace(matrix), 0.75)

    def test_normalized_error_skips_zero_reference(self):
        np.testing.assert_allclose(normalized_error([2.0, 0.0, 4.0], [1.0, 5.0, 4.0]), [0.5, 0.0])


class ComputeMetricsTests(UnitTestCase):
    def test_single_detector(self):
        drops = [
            DropStub([1.0, 4.0], [0.0, 0.1], [1, 2], [SlotStub(0), SlotStub(0)]),
            DropStub([4.0, 16.0], [0.2, 0.0], [3, 4], [SlotStub(0)]),
        ]
        report = compute_metrics(drops, slots=2, t_slot=1e-3, scheme='single', detector_names=['lmmse'])
        self.assertEqual(report.users, 4)
        self.assertAlmostEqual(report.am, 6.25)
        self.assertAlmostEqual(report.gm, 4.0)
        self.assertIsNone(report.confusion)
        self.assertIsNone(report.selection_accuracy)
        self.assertEqual(report.detector_share, {'lmmse': 1.0})
        summary = report.summary()
        self.assertAlmostEqual(summary['mean_cer'], 0.075)
        self.assertNotIn('selection_accuracy', summary)

    def test_detector_selection_accuracy(self):
        slots = [SlotStub(0, 0), SlotStub(1, 1), SlotStub(1, 0), SlotStub(0, 0)]
        drops = [DropStub([1.0], [0.0], [1], slots)]
        report = compute_metrics(drops, 4, 1e-3, scheme='hybrid', detector_names=['lmmse', 'kbest16'])
        self.assertAlmostEqual(report.selection_accuracy, 0.75)
        self.assertEqual(report.detector_share, {'lmmse': 0.5, 'kbest16': 0.5})
        self.assertEqual(report.summary()['share_kbest16'], 0.5)

    def test_needs_drops(self):
        with self.assertRaises(InvalidArgument):
            compute_metrics([], 1, 1e-3)
