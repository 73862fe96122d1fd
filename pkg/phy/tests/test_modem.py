from unittest import TestCase as UnitTestCase

import numpy as np

from core.errors import InvalidArgument
from phy.services.modem import (
    SUPPORTED_ORDERS,
    build_constellation,
    demap_bits,
    demap_scalar,
    llr_to_posterior,
    log2_posterior,
    map_bits,
)


class ConstellationTests(UnitTestCase):
    def test_every_order_has_unit_average_energy(self):
        for m in SUPPORTED_ORDERS:
            c = build_constellation(m)
            self.assertEqual(c.size, 2 ** m)
            self.assertAlmostEqual(np.mean(np.abs(c.points) ** 2), 1.0, delta=1e-12)

    def test_qpsk_points(self):
        c = build_constellation(2)
        np.testing.assert_allclose(np.abs(c.points.real), 1 / np.sqrt(2))
        np.testing.assert_allclose(np.abs(c.points.imag), 1 / np.sqrt(2))
        self.assertEqual(len(set(np.round(c.points, 9))), 4)

    def test_16qam_coordinates(self):
        c = build_constellation(4)
        levels = np.sort(np.unique(np.round(c.points.real * np.sqrt(10), 9)))
        np.testing.assert_allclose(levels, [-3, -1, 1, 3])
        levels = np.sort(np.unique(np.round(c.points.imag * np.sqrt(10), 9)))
        np.testing.assert_allclose(levels, [-3, -1, 1, 3])

    def test_odd_order_is_rejected(self):
        with self.assertRaises(InvalidArgument):
            build_constellation(3)

    def test_axis_neighbours_differ_in_one_bit(self):
        for m in SUPPORTED_ORDERS:
            c = build_constellation(m)
            spacing = 2.0 / np.sqrt(2.0 * (c.size - 1) / 3.0)
            distance = np.abs(c.points[:, None] - c.points[None, :])
            neighbours = np.argwhere(np.abs(distance - spacing) < 1e-9)
            self.assertGreater(len(neighbours), 0)
            for a, b in neighbours:
                self.assertEqual(int(np.sum(c.labels[a] != c.labels[b])), 1)

    def test_constellation_is_read_only(self):
        c = build_constellation(2)
        with self.assertRaises(ValueError):
            c.points[0] = 0


class MappingTests(UnitTestCase):
    def test_zero_bits_map_to_point_labelled_zero(self):
        c = build_constellation(2)
        self.assertEqual(map_bits([0, 0], c)[0], c.points[0])

    def test_round_trip_for_every_order(self):
        rng = np.random.default_rng(1)
        for m in SUPPORTED_ORDERS:
            c = build_constellation(m)
            bits = rng.integers(0, 2, size=8 * m)
            symbols = map_bits(bits, c)
            self.assertEqual(symbols.shape, (8,))
            np.testing.assert_array_equal(demap_bits(symbols, c), bits)

    def test_length_not_divisible_by_m(self):
        with self.assertRaises(InvalidArgument):
            map_bits(np.zeros(6, dtype=np.uint8), build_constellation(4))


class PosteriorTests(UnitTestCase):
    def test_zero_llr_is_uninformative(self):
        self.assertEqual(llr_to_posterior(0.0, 1), 0.5)
        self.assertEqual(log2_posterior(0.0, 0), -1.0)
        self.assertEqual(log2_posterior(0.0, 1), -1.0)

    def test_saturated_llr(self):
        self.assertGreaterEqual(llr_to_posterior(30.0, 1), 1 - 1e-13)

    def test_logistic_value(self):
        self.assertAlmostEqual(llr_to_posterior(2.0, 0), 1 / (1 + np.e ** 2), places=12)
        self.assertAlmostEqual(float(llr_to_posterior(2.0, 0)), 0.11920, places=5)

    def test_posteriors_sum_to_one(self):
        values = np.linspace(-30, 30, 61)
        total = llr_to_posterior(values, 1) + llr_to_posterior(values, 0)
        np.testing.assert_allclose(total, 1.0, atol=1e-15)

    def test_log2_posterior_matches_direct_evaluation(self):
        values = np.array([-5.0, -0.5, 0.3, 4.0])
        np.testing.assert_allclose(log2_posterior(values, 1), np.log2(llr_to_posterior(values, 1)), rtol=1e-12)


class SoftDemapTests(UnitTestCase):
    def test_qpsk_llrs_have_closed_form(self):
        c = build_constellation(2)
        z = np.array([0.1 + 0.2j])
        noise_var = 0.5
        expected = 2 * np.sqrt(2) * np.array([0.1, 0.2]) / noise_var
        for max_log in (True, False):
            llrs = demap_scalar(z, noise_var, c, max_log=max_log)
            np.testing.assert_allclose(llrs[0], expected, rtol=1e-12)

    def test_noiseless_llrs_hit_the_clip(self):
        c = build_constellation(4)
        bits = np.array([1, 0, 0, 1])
        z = map_bits(bits, c)
        llrs = demap_scalar(z, 1e-9, c, clip_limit=30.0)
        np.testing.assert_array_equal(llrs[0], np.where(bits == 1, 30.0, -30.0))
